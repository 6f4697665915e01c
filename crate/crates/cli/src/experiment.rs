//! Runs one configured experiment in memory.

use std::time::Instant;

use clm_core::problems::{sample_initial_states, sample_uniform_states, InitialPrior, Problem};
use clm_core::{
    best_member, multistart_descent, multistart_quasi_newton, quasi_newton, run_clm,
    DescentOptions, EnsembleState, LocalMinResult, QuasiNewtonOptions, RunTrace,
};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::config::{ExperimentConfig, InitSpec, PolishScope, ProblemSpec};
use crate::error::CliError;

/// One `run_clm` call and where it sits in the concatenated trace.
#[derive(Debug, Clone)]
pub struct Phase {
    pub name: &'static str,
    pub trace: RunTrace,
    /// Window number of the first record in the concatenated trace.
    pub first_window: usize,
    /// Flow time at the start of the phase.
    pub t_offset: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct MlpReport {
    pub train_mse: f64,
    pub test_mse: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct BaselineReport {
    pub multistart_best: Option<f64>,
    pub quasi_newton_best: Option<f64>,
}

#[derive(Debug, Clone)]
pub struct Outcome {
    pub config: ExperimentConfig,
    pub problem_name: String,
    pub initial: EnsembleState,
    pub final_state: EnsembleState,
    pub phases: Vec<Phase>,
    /// Lowest-cost member of the final ensemble (cost without offset).
    pub best_index: usize,
    pub best_cost_pre_polish: f64,
    pub argmin_pre_polish: Vec<f64>,
    pub polish: Option<LocalMinResult>,
    pub best_cost: f64,
    pub argmin: Vec<f64>,
    pub wall_time_s: f64,
    pub mlp: Option<MlpReport>,
    pub baselines: Option<BaselineReport>,
}

/// A run that stopped early, with the phases completed so far (the last
/// one partial).
#[derive(Debug)]
pub struct Failure {
    pub error: CliError,
    pub phases: Vec<Phase>,
    pub q: usize,
}

impl From<CliError> for Failure {
    fn from(error: CliError) -> Self {
        Failure {
            error,
            phases: Vec::new(),
            q: 0,
        }
    }
}

/// Initial member states drawn with `cfg.seed`.
pub fn initial_state(cfg: &ExperimentConfig) -> Result<EnsembleState, CliError> {
    let (q, n) = (cfg.clm.q, cfg.problem.dim());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    Ok(match &cfg.init {
        InitSpec::Gaussian { sigma } => {
            sample_initial_states(InitialPrior::new(*sigma)?, q, n, &mut rng)?
        }
        InitSpec::Uniform { lo, hi } => sample_uniform_states(*lo, *hi, q, n, &mut rng)?,
        InitSpec::Explicit { states } => EnsembleState::from_states(states.clone())?,
    })
}

fn member_states(ens: &EnsembleState) -> Vec<Vec<f64>> {
    (0..ens.q()).map(|i| ens.x(i).to_vec()).collect()
}

fn push_phase(phases: &mut Vec<Phase>, name: &'static str, trace: RunTrace) {
    let (first_window, t_offset) = match phases.last() {
        Some(p) => (
            p.first_window + p.trace.records.len(),
            p.t_offset + p.trace.last().map_or(0.0, |r| r.t),
        ),
        None => (0, 0.0),
    };
    phases.push(Phase {
        name,
        trace,
        first_window,
        t_offset,
    });
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Outcome, Failure> {
    cfg.validate()?;
    let built = cfg.problem.build()?;
    let init = initial_state(cfg)?;
    let q = cfg.clm.q;
    let started = Instant::now();
    let mut phases = Vec::new();

    let mut ens = init.clone();
    if let (Some(shift), ProblemSpec::Lj { atoms, .. }) = (&cfg.shift, &cfg.problem) {
        let p = shift.build(*atoms);
        let mut clm = cfg.clm.clone();
        clm.max_windows = shift.max_windows;
        match run_clm(&p, &clm, ens) {
            Ok((e, trace)) => {
                push_phase(&mut phases, "shifted", trace);
                ens = EnsembleState::from_states(member_states(&e)).map_err(CliError::from)?;
            }
            Err(f) => {
                push_phase(&mut phases, "shifted", f.trace);
                return Err(Failure {
                    error: f.error.into(),
                    phases,
                    q,
                });
            }
        }
    }

    let mut clm = cfg.clm.clone();
    if cfg.shift.is_some() {
        clm.seed = clm.seed.wrapping_add(1);
    }
    let final_state = match run_clm(&built.run, &clm, ens) {
        Ok((e, trace)) => {
            push_phase(&mut phases, "main", trace);
            e
        }
        Err(f) => {
            push_phase(&mut phases, "main", f.trace);
            return Err(Failure {
                error: f.error.into(),
                phases,
                q,
            });
        }
    };

    let raw: &dyn Problem = &*built.raw;
    let (best_index, argmin_pre, best_pre) = best_member(&final_state, &raw);
    let qn = QuasiNewtonOptions {
        grad_tol: cfg.polish.grad_tol,
        max_iter: cfg.polish.max_iter,
        ..Default::default()
    };
    let polish = cfg.polish.enabled.then(|| match cfg.polish.scope {
        PolishScope::Best => quasi_newton(&raw, &argmin_pre, &qn),
        PolishScope::All => {
            multistart_quasi_newton(&raw, &member_states(&final_state), &qn).swap_remove(0)
        }
    });
    let (best_cost, argmin) = match &polish {
        Some(r) if r.cost <= best_pre => (r.cost, r.argmin.clone()),
        _ => (best_pre, argmin_pre.clone()),
    };
    let wall_time_s = started.elapsed().as_secs_f64();

    let mlp = match &built.mlp {
        Some(m) => Some(MlpReport {
            train_mse: m.train.mse(&m.shape, &argmin).map_err(CliError::from)?,
            test_mse: m.test.mse(&m.shape, &argmin).map_err(CliError::from)?,
        }),
        None => None,
    };
    let b = &cfg.baselines;
    let baselines = (b.multistart_descent || b.quasi_newton).then(|| {
        let (ms, qn) = baseline_bests(
            raw,
            &init,
            b.multistart_descent,
            b.quasi_newton,
            b.descent_max_iter,
        );
        BaselineReport {
            multistart_best: ms,
            quasi_newton_best: qn,
        }
    });

    Ok(Outcome {
        config: cfg.clone(),
        problem_name: raw.name(),
        initial: init,
        final_state,
        phases,
        best_index,
        best_cost_pre_polish: best_pre,
        argmin_pre_polish: argmin_pre,
        polish,
        best_cost,
        argmin,
        wall_time_s,
        mlp,
        baselines,
    })
}

/// Best costs of independent steepest-descent and L-BFGS runs started from
/// the members of `init`. Runs that hit a non-finite cost are ignored.
pub fn baseline_bests(
    raw: &dyn Problem,
    init: &EnsembleState,
    descent: bool,
    lbfgs: bool,
    descent_max_iter: usize,
) -> (Option<f64>, Option<f64>) {
    let starts = member_states(init);
    let best = |v: Vec<LocalMinResult>| {
        v.into_iter()
            .find(|r| r.failure.is_none())
            .map_or(f64::NAN, |r| r.cost)
    };
    let ms = descent.then(|| {
        let opts = DescentOptions {
            max_iter: descent_max_iter,
            ..Default::default()
        };
        best(multistart_descent(&raw, &starts, &opts))
    });
    let qn = lbfgs.then(|| {
        best(multistart_quasi_newton(
            &raw,
            &starts,
            &QuasiNewtonOptions::default(),
        ))
    });
    (ms, qn)
}

impl Outcome {
    pub fn total_windows(&self) -> usize {
        self.phases.iter().map(|p| p.trace.records.len()).sum()
    }

    /// Final record of the last phase.
    pub fn last_record(&self) -> Option<&clm_core::WindowRecord> {
        self.phases.last().and_then(|p| p.trace.last())
    }
}
