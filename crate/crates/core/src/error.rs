use thiserror::Error;

/// Errors raised by the numerical core.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),
    #[error("invalid time t = {0}: must be finite and non-negative")]
    InvalidTime(f64),
    #[error("matrix is not positive semi-definite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },
    #[error("shape mismatch: {0}")]
    InvalidShape(String),
    #[error("training diverged at step {step} (loss {loss})")]
    DivergedTraining { step: usize, loss: f64 },
    #[error("linearized flow diverged at step {step}")]
    DivergedFlow { step: usize },
    #[error("invalid 2x2 covariance (t11={t11}, t12={t12}, t22={t22})")]
    InvalidCovariance { t11: f64, t12: f64, t22: f64 },
    #[error("limiting kernel on the training set is degenerate: min eigenvalue {min_eig:.3e} <= {tol:.1e}")]
    KernelDegenerate { min_eig: f64, tol: f64 },
    #[error("covariance has a negative variance {value:.3e} beyond round-off")]
    NegativeVariance { value: f64 },
    #[error("empirical distributions have different sample counts ({0} vs {1})")]
    UnequalSupport(usize, usize),
    #[error("empirical distribution is empty")]
    EmptyDist,
    #[error("support of size {size} exceeds the assignment solver cap {cap}")]
    TooLarge { size: usize, cap: usize },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("r = {0} violates r >= 5")]
    InvalidR(f64),
    #[error("activation norm audit failed for {constant}: declared {declared}, observed {observed}")]
    NormAuditFailed {
        constant: &'static str,
        declared: f64,
        observed: f64,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
