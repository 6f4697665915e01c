//! Coupled local minimizers (CLM).
//!
//! An ensemble of `q` gradient flows on the same cost function is coupled
//! on a ring through pairwise synchronization constraints `x(i) = x(i+1)`.
//! The constraints enter an augmented Lagrangian both as quadratic penalties
//! (weights `gamma`) and through Lagrange multipliers, and the resulting
//! primal-descent / dual-ascent system is integrated in windows of fixed
//! length. Between windows the penalty weights are chosen by a box-constrained
//! linear program that maximizes the instantaneous decrease of the ensemble's
//! average cost, and the step size `eta` is chosen so that the average cost
//! follows an exponential decay law towards a target value.
//!
//! Module map:
//!
//! - [`ensemble`]: ensemble state, right-hand side of the coupled system,
//!   scalar diagnostics.
//! - [`schedule`]: per-window penalty weights, step size and random
//!   renumbering of ensemble members.
//! - [`integrate`]: adaptive Dormand-Prince integration and the outer
//!   optimization loop.
//! - [`problems`]: benchmark cost functions with analytic gradients.
//! - [`baselines`]: multi-start steepest descent, L-BFGS polish and a
//!   finite-difference gradient.
//! - [`gradcheck`]: finite-difference verification across all registered
//!   problems.
//! - [`io`]: XYZ geometries and CSV datasets.

pub mod baselines;
pub mod ensemble;
pub mod error;
pub mod gradcheck;
pub mod integrate;
pub mod io;
pub mod problems;
pub mod schedule;

pub use baselines::{
    finite_diff_grad, multistart_descent, multistart_quasi_newton, quasi_newton, DescentOptions,
    LocalMinResult, QuasiNewtonOptions,
};
pub use ensemble::{
    augmented_lagrangian, average_cost, clm_rhs, sync_residual, EnsembleState, ScheduleParams,
};
pub use error::{ClmError, Result};
pub use integrate::{
    best_member, integrate_window, run_clm, ClmConfig, IntegrationStats, RunFailure, RunTrace,
    WindowRecord,
};
pub use problems::Problem;
pub use schedule::{
    gamma_coefficients, renumber, schedule_eta, schedule_gamma, EtaChoice, Renumbering,
    ScheduleConfig,
};
