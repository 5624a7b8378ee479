use thiserror::Error;

/// Errors raised by the numerical, solver and inference layers.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("matrix is not positive definite (pivot {pivot:e} at index {index})")]
    NotPositiveDefinite { index: usize, pivot: f64 },

    #[error("{routine} did not converge within {iterations} iterations")]
    NoConvergence {
        routine: &'static str,
        iterations: usize,
    },

    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("batch size overflows u64 at step {step}")]
    Overflow { step: u64 },

    #[error("step size {alpha} is inadmissible: {reason}")]
    InadmissibleAlpha { alpha: f64, reason: String },

    #[error("momentum {beta} is inadmissible: {reason}")]
    InadmissibleBeta { beta: f64, reason: String },

    #[error("rate {rho} must lie in ({floor}, 1)")]
    InadmissibleRho { rho: f64, floor: f64 },

    #[error("matrix is not stable (spectral radius {radius})")]
    Unstable { radius: f64 },

    #[error("polynomial covariance series not converged: difference {difference:e} at k = {k_trunc}")]
    TruncationNotConverged { k_trunc: u64, difference: f64 },

    #[error("sample covariance is singular")]
    SingularCovariance,

    #[error("need more than {dim} replicates, got {n}")]
    TooFewReplicates { n: usize, dim: usize },

    #[error("matrix step rule requires a closed-form Hessian")]
    MatrixStepUnavailable,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
