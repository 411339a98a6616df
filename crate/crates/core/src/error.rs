use thiserror::Error;

/// Errors raised by the modeling library.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite after jitter escalation (largest jitter {jitter:e})")]
    NotPositiveDefinite { jitter: f64 },

    #[error("lengthscale {index} must be positive, got {value}")]
    InvalidLengthscale { index: usize, value: f64 },

    #[error("reference grid needs at least two strictly increasing nodes")]
    EmptyGrid,

    #[error("length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("degenerate input to the linear monotone transform")]
    DegenerateInput,

    #[error("elliptical slice sampler exceeded {0} bracket shrinks")]
    ShrinkLimitExceeded(usize),

    #[error("need more observations than inputs (n = {n}, p = {p})")]
    TooFewObservations { n: usize, p: usize },

    #[error("residual scale collapsed to zero (s2 = {0:e})")]
    DegenerateResiduals(f64),

    #[error("response contains a non-finite value at row {0}")]
    NonFiniteResponse(usize),

    #[error("Student-t degrees of freedom too small for a finite variance (dof = {0})")]
    DofTooSmall(usize),

    #[error("predictive variance must be positive (index {index}, value {value})")]
    NonPositiveVariance { index: usize, value: f64 },

    #[error("unknown test function '{0}'")]
    UnknownFunction(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("chain holds no retained draws")]
    EmptyChain,
}

pub type Result<T> = std::result::Result<T, Error>;
