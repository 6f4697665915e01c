//! Adaptive Runge-Kutta integration of the coupled system and the outer
//! window loop that reschedules `gamma` and `eta` between windows.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::ensemble::{rhs_into, sync_residual, EnsembleState};
use crate::error::{ClmError, Result};
use crate::problems::Problem;
use crate::schedule::{
    gamma_coefficients, renumber, schedule_eta, schedule_gamma, Renumbering, ScheduleConfig,
};

// Dormand-Prince 5(4) tableau. The system is autonomous, so the nodes
// c = (0, 1/5, 3/10, 4/5, 8/9, 1, 1) are not needed.
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [
        19372.0 / 6561.0,
        -25360.0 / 2187.0,
        64448.0 / 6561.0,
        -212.0 / 729.0,
        0.0,
        0.0,
    ],
    [
        9017.0 / 3168.0,
        -355.0 / 33.0,
        46732.0 / 5247.0,
        49.0 / 176.0,
        -5103.0 / 18656.0,
        0.0,
    ],
    [
        35.0 / 384.0,
        0.0,
        500.0 / 1113.0,
        125.0 / 192.0,
        -2187.0 / 6784.0,
        11.0 / 84.0,
    ],
];
// difference between the 5th and embedded 4th order weights
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IntegratorOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_steps: usize,
    /// First trial step; estimated from the initial derivative when `None`.
    pub initial_step: Option<f64>,
}

impl IntegratorOptions {
    pub fn new(abs_tol: f64, rel_tol: f64) -> Self {
        Self {
            abs_tol,
            rel_tol,
            max_steps: 200_000,
            initial_step: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct IntegrationStats {
    pub steps: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
    /// Size of the last step proposed by the controller, a good first trial
    /// step for a following window.
    pub next_step: f64,
}

fn error_norm(y0: &[f64], y1: &[f64], err: &[f64], atol: f64, rtol: f64) -> f64 {
    let mut s = 0.0;
    for ((a, b), e) in y0.iter().zip(y1).zip(err) {
        let sc = atol + rtol * a.abs().max(b.abs());
        s += (e / sc) * (e / sc);
    }
    (s / y0.len() as f64).sqrt()
}

fn initial_step<F>(y0: &[f64], f0: &[f64], rhs: &mut F, span: f64, atol: f64, rtol: f64) -> f64
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    let scaled = |v: &[f64]| {
        let s: f64 = v
            .iter()
            .zip(y0)
            .map(|(v, y)| (v / (atol + rtol * y.abs())).powi(2))
            .sum();
        (s / v.len() as f64).sqrt()
    };
    let (d0, d1) = (scaled(y0), scaled(f0));
    let h0 = if d0 < 1e-5 || d1 < 1e-5 {
        1e-6 * span
    } else {
        (0.01 * d0 / d1).min(span)
    };
    let y1: Vec<f64> = y0.iter().zip(f0).map(|(y, f)| y + h0 * f).collect();
    let mut f1 = vec![0.0; y0.len()];
    if rhs(&y1, &mut f1).is_err() {
        return h0 * 1e-3;
    }
    let diff: Vec<f64> = f1.iter().zip(f0).map(|(a, b)| a - b).collect();
    let d2 = scaled(&diff) / h0;
    let h1 = if d1.max(d2) <= 1e-15 {
        (h0 * 1e-3).max(1e-6 * span)
    } else {
        (0.01 / d1.max(d2)).powf(1.0 / 5.0)
    };
    (100.0 * h0).min(h1).min(span)
}

/// Advances an autonomous system `y' = f(y)` by exactly `delta_t` with the
/// Dormand-Prince 5(4) pair and mixed absolute/relative error control.
pub fn integrate_window<F>(
    y0: &[f64],
    rhs: F,
    delta_t: f64,
    abs_tol: f64,
    rel_tol: f64,
) -> Result<(Vec<f64>, IntegrationStats)>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    integrate_window_with(y0, rhs, delta_t, &IntegratorOptions::new(abs_tol, rel_tol))
}

pub fn integrate_window_with<F>(
    y0: &[f64],
    mut rhs: F,
    delta_t: f64,
    opts: &IntegratorOptions,
) -> Result<(Vec<f64>, IntegrationStats)>
where
    F: FnMut(&[f64], &mut [f64]) -> Result<()>,
{
    if !(delta_t > 0.0) || !(opts.abs_tol > 0.0) || !(opts.rel_tol > 0.0) {
        return Err(ClmError::config(
            "window length and tolerances must be positive",
        ));
    }
    let dim = y0.len();
    let mut stats = IntegrationStats::default();
    let mut y = y0.to_vec();
    let mut k: Vec<Vec<f64>> = vec![vec![0.0; dim]; 7];
    rhs(&y, &mut k[0])?;
    stats.rhs_evals += 1;

    let mut h = match opts.initial_step {
        Some(h) if h > 0.0 => h.min(delta_t),
        _ => {
            stats.rhs_evals += 1;
            initial_step(
                &y,
                &k[0].clone(),
                &mut rhs,
                delta_t,
                opts.abs_tol,
                opts.rel_tol,
            )
        }
    };
    let mut t = 0.0;
    let mut stage = vec![0.0; dim];
    let mut y_new = vec![0.0; dim];
    let mut err = vec![0.0; dim];
    let mut last_rejected = false;

    while t < delta_t {
        if stats.steps + stats.rejected >= opts.max_steps {
            return Err(ClmError::Integration {
                t,
                step: h,
                reason: "step budget exhausted",
                last_state: y,
            });
        }
        let h_min = 16.0 * f64::EPSILON * delta_t.max(t);
        if h < h_min {
            return Err(ClmError::Integration {
                t,
                step: h,
                reason: "step size underflow",
                last_state: y,
            });
        }
        let last = t + h >= delta_t * (1.0 - 1e-12);
        if last {
            h = delta_t - t;
        }

        let mut stage_ok = true;
        for s in 1..7 {
            for d in 0..dim {
                let mut acc = 0.0;
                for (j, kj) in k.iter().enumerate().take(s) {
                    acc += A[s][j] * kj[d];
                }
                stage[d] = y[d] + h * acc;
            }
            let (_, tail) = k.split_at_mut(s);
            if rhs(&stage, &mut tail[0]).is_err() {
                stage_ok = false;
                break;
            }
            stats.rhs_evals += 1;
        }

        let norm = if stage_ok {
            // stage 7 is evaluated at the 5th-order solution (FSAL)
            y_new.copy_from_slice(&stage);
            for d in 0..dim {
                let mut e = 0.0;
                for (j, kj) in k.iter().enumerate() {
                    e += E[j] * kj[d];
                }
                err[d] = h * e;
            }
            error_norm(&y, &y_new, &err, opts.abs_tol, opts.rel_tol)
        } else {
            f64::INFINITY
        };

        if norm <= 1.0 {
            t = if last { delta_t } else { t + h };
            std::mem::swap(&mut y, &mut y_new);
            k.swap(0, 6);
            stats.steps += 1;
            let fac = if norm == 0.0 {
                10.0
            } else {
                (0.9 * norm.powf(-0.2)).clamp(0.2, 10.0)
            };
            let fac = if last_rejected { fac.min(1.0) } else { fac };
            last_rejected = false;
            stats.next_step = h * fac;
            h *= fac;
        } else {
            stats.rejected += 1;
            last_rejected = true;
            let fac = if norm.is_finite() {
                (0.9 * norm.powf(-0.2)).clamp(0.1, 0.9)
            } else {
                0.25
            };
            h *= fac;
        }
    }
    Ok((y, stats))
}

fn default_tol() -> f64 {
    1e-2
}

fn default_stop_sync_tol() -> f64 {
    1e-6
}

fn default_max_steps() -> usize {
    200_000
}

/// Settings of one optimization run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClmConfig {
    pub q: usize,
    /// Flow time covered by one window.
    pub delta_t: f64,
    pub schedule: ScheduleConfig,
    #[serde(default = "default_tol")]
    pub abs_tol: f64,
    #[serde(default = "default_tol")]
    pub rel_tol: f64,
    pub max_windows: usize,
    #[serde(default = "default_stop_sync_tol")]
    pub stop_sync_tol: f64,
    #[serde(default = "default_max_steps")]
    pub max_steps_per_window: usize,
    #[serde(default)]
    pub seed: u64,
}

impl ClmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.q < 2 {
            return Err(ClmError::config(format!(
                "q must be at least 2, got {}",
                self.q
            )));
        }
        if !(self.delta_t > 0.0 && self.delta_t.is_finite()) {
            return Err(ClmError::config(format!(
                "delta_t must be positive, got {}",
                self.delta_t
            )));
        }
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(ClmError::config("integrator tolerances must be positive"));
        }
        if self.max_windows == 0 {
            return Err(ClmError::config("max_windows must be at least 1"));
        }
        if !(self.stop_sync_tol >= 0.0) {
            return Err(ClmError::config("stop_sync_tol must be non-negative"));
        }
        self.schedule.validate()
    }
}

/// Everything recorded about one completed window.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WindowRecord {
    pub window: usize,
    /// Flow time at the end of the window.
    pub t: f64,
    /// Member costs at the end of the window.
    pub costs: Vec<f64>,
    pub avg_cost: f64,
    /// Average cost at the start of the window.
    pub avg_cost_start: f64,
    pub sync_residual: f64,
    pub gamma: Vec<f64>,
    pub eta: f64,
    pub eta_raw: f64,
    pub stationary: bool,
    pub renumbering: Option<Renumbering>,
    pub steps: usize,
    pub rejected: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    Converged,
    MaxWindows,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunTrace {
    pub records: Vec<WindowRecord>,
    pub stop_reason: Option<StopReason>,
}

impl RunTrace {
    pub fn last(&self) -> Option<&WindowRecord> {
        self.records.last()
    }
}

/// A run that stopped on an error. Carries everything completed so far.
#[derive(Debug)]
pub struct RunFailure {
    pub error: ClmError,
    pub trace: RunTrace,
    pub state: EnsembleState,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "run failed after {} windows: {}",
            self.trace.records.len(),
            self.error
        )
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Costs and gradients of all members, gradients back to back.
fn evaluate<P: Problem + ?Sized>(ens: &EnsembleState, p: &P) -> Result<(Vec<f64>, Vec<f64>)> {
    let (q, n) = (ens.q(), ens.dim());
    let mut grads = vec![0.0; q * n];
    let mut costs = Vec::with_capacity(q);
    for i in 0..q {
        let c = p.cost_and_gradient(ens.x(i), &mut grads[i * n..(i + 1) * n]);
        if !c.is_finite() {
            return Err(ClmError::NonFiniteCost { index: i, value: c });
        }
        if grads[i * n..(i + 1) * n].iter().any(|g| !g.is_finite()) {
            return Err(ClmError::NonFiniteGradient { index: i });
        }
        costs.push(c);
    }
    Ok((costs, grads))
}

const STOP_LOOKBACK: usize = 10;
const STOP_REL_CHANGE: f64 = 1e-6;

/// Runs the coupled minimizers from `init`.
///
/// Each window: evaluate member gradients, choose `gamma` by the LP sign
/// rule, choose `eta` from the target law, integrate over `delta_t` with both
/// held fixed, renumber every `renumber_period`-th window, record. Stops
/// after `max_windows` or once the ensemble is synchronized to
/// `stop_sync_tol` and the average cost has stalled over the last 10 windows.
pub fn run_clm<P: Problem + ?Sized>(
    p: &P,
    cfg: &ClmConfig,
    init: EnsembleState,
) -> std::result::Result<(EnsembleState, RunTrace), RunFailure> {
    let mut trace = RunTrace::default();
    let fail = |error, trace, state| RunFailure {
        error,
        trace,
        state,
    };
    if let Err(e) = cfg.validate() {
        return Err(fail(e, trace, init));
    }
    if init.q() != cfg.q {
        return Err(fail(
            ClmError::DimensionMismatch {
                expected: cfg.q,
                found: init.q(),
            },
            trace,
            init,
        ));
    }
    if let Err(e) = init.check_problem(p) {
        return Err(fail(e, trace, init));
    }

    let (q, n) = (init.q(), init.dim());
    let sched = &cfg.schedule;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut opts = IntegratorOptions::new(cfg.abs_tol, cfg.rel_tol);
    opts.max_steps = cfg.max_steps_per_window;

    let mut ens = init;
    let (mut costs, mut grads) = match evaluate(&ens, p) {
        Ok(v) => v,
        Err(e) => return Err(fail(e, trace, ens)),
    };
    let mut t = 0.0;

    for window in 0..cfg.max_windows {
        let avg_start = costs.iter().sum::<f64>() / q as f64;
        let gamma = schedule_gamma(
            &gamma_coefficients(&ens, &grads).expect("shapes checked"),
            sched,
        );
        let eta = schedule_eta(&ens, &grads, &costs, &gamma, sched).expect("shapes checked");

        let step = integrate_window_with(
            ens.as_flat(),
            |y: &[f64], dy: &mut [f64]| rhs_into(q, n, y, p, &gamma, eta.eta, dy),
            cfg.delta_t,
            &opts,
        );
        let (y, stats) = match step {
            Ok(v) => v,
            Err(e) => return Err(fail(e, trace, ens)),
        };
        opts.initial_step = Some(stats.next_step);
        ens = EnsembleState::from_flat(q, n, y).expect("integrator preserves shape");
        t += cfg.delta_t;

        let renumbering = if sched.renumber_period > 0 && (window + 1) % sched.renumber_period == 0
        {
            let (next, r) = renumber(&ens, sched.renumber_fraction, &mut rng);
            ens = next;
            Some(r)
        } else {
            None
        };

        match evaluate(&ens, p) {
            Ok((c, g)) => {
                costs = c;
                grads = g;
            }
            Err(e) => return Err(fail(e, trace, ens)),
        }
        let avg_cost = costs.iter().sum::<f64>() / q as f64;
        let residual = sync_residual(&ens);
        trace.records.push(WindowRecord {
            window,
            t,
            costs: costs.clone(),
            avg_cost,
            avg_cost_start: avg_start,
            sync_residual: residual,
            gamma,
            eta: eta.eta,
            eta_raw: eta.raw,
            stationary: eta.stationary,
            renumbering,
            steps: stats.steps,
            rejected: stats.rejected,
        });

        let recs = &trace.records;
        if residual < cfg.stop_sync_tol && recs.len() > STOP_LOOKBACK {
            let before = recs[recs.len() - 1 - STOP_LOOKBACK].avg_cost;
            if (avg_cost - before).abs() <= STOP_REL_CHANGE * before.abs() {
                trace.stop_reason = Some(StopReason::Converged);
                return Ok((ens, trace));
            }
        }
    }
    trace.stop_reason = Some(StopReason::MaxWindows);
    Ok((ens, trace))
}

/// Member with the lowest cost (first one on ties), its state and its cost.
pub fn best_member<P: Problem + ?Sized>(ens: &EnsembleState, p: &P) -> (usize, Vec<f64>, f64) {
    let mut best = (0, f64::INFINITY);
    for i in 0..ens.q() {
        let c = p.cost(ens.x(i));
        if c < best.1 {
            best = (i, c);
        }
    }
    if !best.1.is_finite() {
        best.1 = p.cost(ens.x(0));
    }
    (best.0, ens.x(best.0).to_vec(), best.1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::{DoubleWell, Quadratic};

    fn decay(y: &[f64], dy: &mut [f64]) -> Result<()> {
        dy.iter_mut().zip(y).for_each(|(d, v)| *d = -v);
        Ok(())
    }

    #[test]
    fn exponential_decay() {
        let tol = 1e-6;
        let (y, stats) = integrate_window(&[1.0], decay, 1.0, tol, tol).unwrap();
        assert!((y[0] - (-1f64).exp()).abs() < 10.0 * tol, "{}", y[0]);
        assert!(stats.steps > 0);
        let (y, _) = integrate_window(&[1.0], decay, 1.0, 1e-2, 1e-2).unwrap();
        assert!((y[0] - (-1f64).exp()).abs() < 1e-1);
    }

    #[test]
    fn zero_field_leaves_state_untouched() {
        let y0 = [1.25, -3.5, 1e-300, 7.0];
        let (y, _) = integrate_window(
            &y0,
            |_: &[f64], d: &mut [f64]| {
                d.iter_mut().for_each(|v| *v = 0.0);
                Ok(())
            },
            0.3,
            1e-2,
            1e-2,
        )
        .unwrap();
        assert_eq!(y, y0);
    }

    #[test]
    fn lands_exactly_on_window_end() {
        // y' = 1 integrates exactly; any overshoot would show
        let (y, _) = integrate_window(
            &[0.0],
            |_: &[f64], d: &mut [f64]| {
                d[0] = 1.0;
                Ok(())
            },
            0.7,
            1e-3,
            1e-3,
        )
        .unwrap();
        assert!((y[0] - 0.7).abs() < 1e-15);
    }

    #[test]
    fn stiff_blowup_reports_last_state() {
        // y' = y^2 from 1 blows up at t = 1
        let res = integrate_window(
            &[1.0],
            |y: &[f64], d: &mut [f64]| {
                d[0] = y[0] * y[0];
                Ok(())
            },
            2.0,
            1e-8,
            1e-8,
        );
        match res {
            Err(ClmError::Integration { t, last_state, .. }) => {
                assert!(t > 0.9 && t < 1.01, "{t}");
                assert!(last_state[0] > 10.0);
            }
            other => panic!("expected integration failure, got {other:?}"),
        }
    }

    #[test]
    fn config_validation() {
        let sched = ScheduleConfig {
            gamma_lo: 1.0,
            gamma_hi: 10.0,
            eta_lo: 0.1,
            eta_hi: 10.0,
            alpha: 1.0,
            u_star: 0.0,
            renumber_period: 0,
            renumber_fraction: 0.0,
        };
        let cfg = ClmConfig {
            q: 2,
            delta_t: 0.1,
            schedule: sched,
            abs_tol: 1e-3,
            rel_tol: 1e-3,
            max_windows: 5,
            stop_sync_tol: 1e-6,
            max_steps_per_window: 1000,
            seed: 0,
        };
        assert!(cfg.validate().is_ok());
        assert!(ClmConfig {
            q: 1,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(ClmConfig {
            delta_t: 0.0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        assert!(ClmConfig {
            max_windows: 0,
            ..cfg.clone()
        }
        .validate()
        .is_err());
        // mismatched init is reported with an empty trace
        let init = EnsembleState::from_states(vec![vec![0.0]; 3]).unwrap();
        let err = run_clm(&DoubleWell, &cfg, init).unwrap_err();
        assert!(err.trace.records.is_empty());
        assert!(matches!(
            err.error,
            ClmError::DimensionMismatch {
                expected: 2,
                found: 3
            }
        ));
    }

    #[test]
    fn best_member_examples() {
        struct Square;
        impl Problem for Square {
            fn dim(&self) -> usize {
                1
            }
            fn cost(&self, x: &[f64]) -> f64 {
                x[0] * x[0]
            }
            fn gradient(&self, x: &[f64], g: &mut [f64]) {
                g[0] = 2.0 * x[0];
            }
            fn name(&self) -> String {
                "square".into()
            }
        }
        let ens = EnsembleState::from_states(vec![vec![1.0], vec![0.0]]).unwrap();
        assert_eq!(best_member(&ens, &Square), (1, vec![0.0], 0.0));
        let eq = EnsembleState::from_states(vec![vec![2.0]; 4]).unwrap();
        assert_eq!(best_member(&eq, &Square).0, 0);
        let q = Quadratic { dim: 2 };
        let ens = EnsembleState::from_states(vec![
            vec![3.0, 0.0],
            vec![-1.0, 1.0],
            vec![0.5, 0.5],
            vec![0.0, 0.9],
        ])
        .unwrap();
        let (i, _, c) = best_member(&ens, &q);
        let scan = (0..4)
            .map(|k| q.cost(ens.x(k)))
            .fold(f64::INFINITY, f64::min);
        assert_eq!(c, scan);
        assert_eq!(i, 2);
    }
}
