use thiserror::Error;

pub type Result<T, E = ClmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ClmError {
    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("non-finite gradient for minimizer {index}")]
    NonFiniteGradient { index: usize },

    #[error("non-finite cost {value} for minimizer {index}")]
    NonFiniteCost { index: usize, value: f64 },

    /// The adaptive integrator could not make progress. `last_state` is the
    /// last accepted state, reached at flow time `t` within the window.
    #[error("integration failed at t = {t:e} (step size {step:e}): {reason}")]
    Integration {
        t: f64,
        step: f64,
        reason: &'static str,
        last_state: Vec<f64>,
    },

    #[error("atoms {first} and {second} coincide")]
    CoincidentAtoms { first: usize, second: usize },

    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl ClmError {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        ClmError::Config(msg.into())
    }

    /// Numerical failures (as opposed to bad input) during a run.
    pub fn is_numerical(&self) -> bool {
        matches!(
            self,
            ClmError::NonFiniteGradient { .. }
                | ClmError::NonFiniteCost { .. }
                | ClmError::Integration { .. }
                | ClmError::CoincidentAtoms { .. }
        )
    }
}
