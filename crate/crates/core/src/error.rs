use thiserror::Error;

/// Errors produced by the solvers, the simulator and the experiment runner.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("grid mismatch: expected {expected} samples, found {found}")]
    GridMismatch { expected: usize, found: usize },

    #[error("corrector did not converge at age {age}: residual {residual:e}")]
    SolverFailure { age: f64, residual: f64 },

    #[error("insufficient sample for generation {generation}: {found} individuals, need {required}")]
    InsufficientSample {
        generation: usize,
        found: u64,
        required: u64,
    },

    #[error("generation {generation} has {count} individuals from truncated outbreaks")]
    Censored { generation: usize, count: u64 },

    #[error("outside the domain of the heuristic: {0}")]
    Domain(String),

    #[error("parse error: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Process exit status used by the command-line runner.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::GridMismatch { .. }
            | Error::Parse(_)
            | Error::Domain(_) => 2,
            Error::SolverFailure { .. } => 3,
            Error::InsufficientSample { .. } | Error::Censored { .. } => 4,
            Error::Io(_) => 1,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn invalid(msg: impl Into<String>) -> Error {
    Error::InvalidParameter(msg.into())
}
