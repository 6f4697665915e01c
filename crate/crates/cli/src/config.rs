//! Experiment configuration files (TOML).
//!
//! ```toml
//! name = "multimodal10"
//! seed = 0
//!
//! [problem]
//! kind = "multimodal"
//! n = 10
//!
//! [init]
//! kind = "uniform"
//! lo = -20.0
//! hi = 20.0
//!
//! [clm]
//! q = 20
//! delta_t = 1.0
//! max_windows = 500
//!
//! [clm.schedule]
//! gamma_lo = 0.1
//! gamma_hi = 1.0
//! eta_lo = 0.01
//! eta_hi = 1000.0
//! alpha = 1.0
//! u_star = 0.0
//! renumber_period = 5
//! renumber_fraction = 0.2
//! ```

use std::path::{Path, PathBuf};

use clm_core::problems::{
    DoubleWell, InitialPrior, LennardJones, MlpRegularized, MlpShape, MlpSse, Multimodal, Offset,
    Problem, Quadratic, SineDatasetOptions,
};
use clm_core::ClmConfig;
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    /// Seeds the initial-state draw. The renumbering stream is seeded by
    /// `clm.seed`.
    #[serde(default)]
    pub seed: u64,
    pub problem: ProblemSpec,
    pub init: InitSpec,
    pub clm: ClmConfig,
    /// Optional first phase on a shifted Lennard-Jones potential; its final
    /// states (with multipliers reset to zero) start the main phase.
    #[serde(default)]
    pub shift: Option<ShiftPhase>,
    #[serde(default)]
    pub polish: PolishConfig,
    #[serde(default)]
    pub baselines: BaselineConfig,
    /// Relative paths are resolved against the output root.
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    DoubleWell {
        #[serde(default)]
        delta: f64,
    },
    Multimodal {
        n: usize,
        #[serde(default = "default_a")]
        a: f64,
        #[serde(default = "default_omega1")]
        omega1: f64,
        #[serde(default = "default_omega2")]
        omega2: f64,
        #[serde(default)]
        delta: f64,
    },
    Quadratic {
        n: usize,
    },
    Lj {
        atoms: usize,
        #[serde(default)]
        mu: f64,
        #[serde(default = "default_nu")]
        nu: i32,
        #[serde(default)]
        delta: f64,
    },
    Mlp {
        #[serde(default = "default_hidden")]
        hidden: usize,
        #[serde(default)]
        dataset_seed: u64,
        #[serde(default)]
        sine: SineDatasetOptions,
        /// Training data as a `u,d` CSV instead of the generated sine set.
        #[serde(default)]
        train_path: Option<PathBuf>,
        /// Test data as a `u,d` CSV; defaults to the generated noiseless grid.
        #[serde(default)]
        test_path: Option<PathBuf>,
        #[serde(default)]
        regularization: Option<Regularization>,
    },
}

fn default_a() -> f64 {
    0.01
}
fn default_omega1() -> f64 {
    0.2
}
fn default_omega2() -> f64 {
    1.0
}
fn default_nu() -> i32 {
    6
}
fn default_hidden() -> usize {
    10
}

/// Cost `zeta * SSE + mu/2 |theta|^2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Regularization {
    pub mu: f64,
    pub zeta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitSpec {
    Gaussian { sigma: f64 },
    Uniform { lo: f64, hi: f64 },
    Explicit { states: Vec<Vec<f64>> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ShiftPhase {
    #[serde(default = "default_shift_mu")]
    pub mu: f64,
    #[serde(default = "default_shift_nu")]
    pub nu: i32,
    #[serde(default)]
    pub delta: f64,
    pub max_windows: usize,
}

fn default_shift_mu() -> f64 {
    0.1
}
fn default_shift_nu() -> i32 {
    3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolishScope {
    /// Polish only the lowest-cost member.
    Best,
    /// Polish every member and keep the lowest result.
    All,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PolishConfig {
    pub enabled: bool,
    pub scope: PolishScope,
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for PolishConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            scope: PolishScope::Best,
            grad_tol: 1e-10,
            max_iter: 1000,
        }
    }
}

/// Reference runs from the same initial states, reported next to the CLM
/// result by `clm run`. `clm bench` always runs both.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BaselineConfig {
    pub multistart_descent: bool,
    pub quasi_newton: bool,
    pub descent_max_iter: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            multistart_descent: false,
            quasi_newton: false,
            descent_max_iter: 10_000,
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, CliError> {
        let cfg: Self = toml::from_str(text).map_err(|e| CliError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let mut cfg = Self::from_toml(&text)?;
        // data files are relative to the config file
        if let ProblemSpec::Mlp {
            train_path,
            test_path,
            ..
        } = &mut cfg.problem
        {
            let base = path.parent().unwrap_or(Path::new("."));
            for p in [train_path, test_path].into_iter().flatten() {
                if p.is_relative() {
                    *p = base.join(&*p);
                }
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.clm
            .validate()
            .map_err(|e| CliError::Config(e.to_string()))?;
        let dim = self.problem.dim();
        if dim == 0 {
            return bad("problem dimension must be positive".into());
        }
        match &self.problem {
            ProblemSpec::Multimodal {
                a, omega1, omega2, ..
            } if ![a, omega1, omega2].iter().all(|v| v.is_finite()) => {
                return bad("multimodal parameters must be finite".into());
            }
            ProblemSpec::Lj { atoms, mu, nu, .. } => {
                if *atoms < 2 {
                    return bad(format!("need at least 2 atoms, got {atoms}"));
                }
                if !(*mu >= 0.0) || *nu < 1 {
                    return bad(format!("invalid shift parameters mu={mu}, nu={nu}"));
                }
            }
            ProblemSpec::Mlp {
                regularization: Some(r),
                ..
            } if !(r.mu >= 0.0 && r.zeta > 0.0) => {
                return bad(format!(
                    "regularization needs mu >= 0 and zeta > 0, got mu={} zeta={}",
                    r.mu, r.zeta
                ));
            }
            ProblemSpec::Mlp {
                sine,
                train_path: None,
                ..
            } if sine.n_points == 0 || !(sine.lo < sine.hi) => {
                return bad("sine dataset needs at least one point and lo < hi".into());
            }
            _ => {}
        }
        match &self.init {
            InitSpec::Gaussian { sigma } => {
                InitialPrior::new(*sigma).map_err(|e| CliError::Config(e.to_string()))?;
            }
            InitSpec::Uniform { lo, hi } => {
                if !(lo < hi) {
                    return bad(format!("uniform init needs lo < hi, got [{lo}, {hi}]"));
                }
            }
            InitSpec::Explicit { states } => {
                if states.len() != self.clm.q {
                    return bad(format!(
                        "explicit init has {} states but q = {}",
                        states.len(),
                        self.clm.q
                    ));
                }
                if let Some(s) = states.iter().find(|s| s.len() != dim) {
                    return bad(format!(
                        "explicit state of length {} for a problem of dimension {dim}",
                        s.len()
                    ));
                }
            }
        }
        if let Some(shift) = &self.shift {
            if !matches!(self.problem, ProblemSpec::Lj { .. }) {
                return bad("a shift phase is only defined for lj problems".into());
            }
            if shift.max_windows == 0 || !(shift.mu >= 0.0) || shift.nu < 1 {
                return bad("shift phase needs max_windows >= 1, mu >= 0 and nu >= 1".into());
            }
        }
        if self.polish.enabled && !(self.polish.grad_tol > 0.0) {
            return bad("polish.grad_tol must be positive".into());
        }
        Ok(())
    }

    /// Same experiment with both seeds replaced.
    pub fn with_seed(&self, seed: u64) -> Self {
        let mut c = self.clone();
        c.seed = seed;
        c.clm.seed = seed;
        c
    }
}

impl ProblemSpec {
    pub fn dim(&self) -> usize {
        match self {
            ProblemSpec::DoubleWell { .. } => 1,
            ProblemSpec::Multimodal { n, .. } | ProblemSpec::Quadratic { n } => *n,
            ProblemSpec::Lj { atoms, .. } => 3 * atoms,
            // datasets are scalar `u,d` pairs
            ProblemSpec::Mlp { hidden, .. } => MlpShape::new(1, *hidden).param_count(),
        }
    }

    /// Constant added to the cost during the run.
    pub fn delta(&self) -> f64 {
        match self {
            ProblemSpec::DoubleWell { delta }
            | ProblemSpec::Multimodal { delta, .. }
            | ProblemSpec::Lj { delta, .. } => *delta,
            _ => 0.0,
        }
    }

    pub fn is_lj(&self) -> bool {
        matches!(self, ProblemSpec::Lj { .. })
    }
}

/// A problem instance built from a spec, with and without the offset.
pub struct BuiltProblem {
    /// The cost as optimized by the CLM run (offset included).
    pub run: Box<dyn Problem>,
    /// The cost without offset; used for polishing and reporting.
    pub raw: Box<dyn Problem>,
    pub mlp: Option<MlpContext>,
}

pub struct MlpContext {
    pub shape: MlpShape,
    pub train: clm_core::problems::Dataset,
    pub test: clm_core::problems::Dataset,
}

fn with_offset(p: Box<dyn Problem>, delta: f64) -> Box<dyn Problem> {
    if delta == 0.0 {
        p
    } else {
        Box::new(Offset { inner: p, delta })
    }
}

impl ProblemSpec {
    pub fn build(&self) -> Result<BuiltProblem, CliError> {
        use rand::SeedableRng;
        let raw = |s: &Self| -> Result<(Box<dyn Problem>, Option<MlpContext>), CliError> {
            Ok(match s {
                ProblemSpec::DoubleWell { .. } => (Box::new(DoubleWell), None),
                ProblemSpec::Multimodal {
                    n,
                    a,
                    omega1,
                    omega2,
                    ..
                } => (
                    Box::new(Multimodal {
                        dim: *n,
                        a: *a,
                        omega1: *omega1,
                        omega2: *omega2,
                    }),
                    None,
                ),
                ProblemSpec::Quadratic { n } => (Box::new(Quadratic { dim: *n }), None),
                ProblemSpec::Lj { atoms, mu, nu, .. } => {
                    (Box::new(LennardJones::shifted(*atoms, *mu, *nu)), None)
                }
                ProblemSpec::Mlp {
                    hidden,
                    dataset_seed,
                    sine,
                    train_path,
                    test_path,
                    regularization,
                } => {
                    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(*dataset_seed);
                    let generated = clm_core::problems::gen_sine_dataset(sine, &mut rng)?;
                    let train = match train_path {
                        Some(p) => clm_core::io::read_dataset_csv(p)?,
                        None => generated.train,
                    };
                    let test = match test_path {
                        Some(p) => clm_core::io::read_dataset_csv(p)?,
                        None => generated.test,
                    };
                    let shape = MlpShape::new(train.input_dim(), *hidden);
                    let sse = MlpSse::new(shape, train.clone())?;
                    let p: Box<dyn Problem> = match regularization {
                        Some(r) => Box::new(MlpRegularized::new(sse, r.mu, r.zeta)?),
                        None => Box::new(sse),
                    };
                    (p, Some(MlpContext { shape, train, test }))
                }
            })
        };
        let (p_raw, mlp) = raw(self)?;
        let (p_run, _) = raw(self)?;
        Ok(BuiltProblem {
            run: with_offset(p_run, self.delta()),
            raw: p_raw,
            mlp,
        })
    }
}

impl ShiftPhase {
    pub fn build(&self, atoms: usize) -> Box<dyn Problem> {
        with_offset(
            Box::new(LennardJones::shifted(atoms, self.mu, self.nu)),
            self.delta,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
name = "t"
[problem]
kind = "double_well"
[init]
kind = "explicit"
states = [[3.0], [-3.0]]
[clm]
q = 2
delta_t = 0.5
max_windows = 10
[clm.schedule]
gamma_lo = 0.05
gamma_hi = 0.25
eta_lo = 1.0
eta_hi = 2.0
alpha = 1.0
u_star = 0.0
renumber_fraction = 0.0
"#;

    #[test]
    fn minimal_config_parses() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(c.clm.q, 2);
        assert_eq!(c.problem, ProblemSpec::DoubleWell { delta: 0.0 });
        assert!(c.polish.enabled);
        assert_eq!(c.clm.abs_tol, 1e-2);
    }

    #[test]
    fn rejects_unknown_keys_and_bad_bounds() {
        let typo = MINIMAL.replace("max_windows", "max_window");
        assert!(matches!(
            ExperimentConfig::from_toml(&typo),
            Err(CliError::Config(_))
        ));
        let flipped = MINIMAL.replace("gamma_hi = 0.25", "gamma_hi = 0.01");
        assert!(matches!(
            ExperimentConfig::from_toml(&flipped),
            Err(CliError::Config(_))
        ));
        let wrong_q = MINIMAL.replace("q = 2", "q = 3");
        assert!(matches!(
            ExperimentConfig::from_toml(&wrong_q),
            Err(CliError::Config(_))
        ));
    }

    #[test]
    fn shift_needs_lj() {
        let s = format!("{MINIMAL}\n[shift]\nmax_windows = 3\n");
        assert!(ExperimentConfig::from_toml(&s).is_err());
    }

    #[test]
    fn toml_round_trip() {
        let c = ExperimentConfig::from_toml(MINIMAL).unwrap();
        let back: ExperimentConfig = toml::from_str(&toml::to_string(&c).unwrap()).unwrap();
        assert_eq!(c, back);
    }

    #[test]
    fn built_problems_carry_offset() {
        let spec = ProblemSpec::Lj {
            atoms: 2,
            mu: 0.0,
            nu: 6,
            delta: 200.0,
        };
        let b = spec.build().unwrap();
        let x = [0.0, 0.0, 0.0, 2f64.powf(1.0 / 6.0), 0.0, 0.0];
        assert!((b.raw.cost(&x) + 1.0).abs() < 1e-12);
        assert!((b.run.cost(&x) - 199.0).abs() < 1e-12);
    }
}
