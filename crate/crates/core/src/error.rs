use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("insufficient data: need at least {needed} observations, have {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("linear system is singular (smallest eigenvalue {min_eigenvalue:e})")]
    Singular { min_eigenvalue: f64 },

    /// The lower multiplicative factor reached 1, so the upper confidence
    /// bound is unbounded and the first phase has to keep sampling.
    #[error("phase precondition failed: s_minus = {s_minus} must be < 1")]
    PhasePrecondition { s_minus: f64 },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("arm {arm} has zero pulls; objective undefined")]
    ZeroCount { arm: usize },
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }
}
