use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// Input outside the domain of the operation (excluded points, bad ranges).
    #[error("domain error: {0}")]
    Domain(String),

    /// Kernel evaluated on its diagonal singularity.
    #[error("kernel singularity: {0}")]
    Singular(String),

    #[error("capacity exceeded: {points} points requested, cap is {cap}")]
    Capacity { points: usize, cap: usize },

    #[error("power iteration did not converge after {iterations} iterations (best estimate {best}, last relative change {residual:e})")]
    NonConvergence {
        best: f64,
        residual: f64,
        iterations: usize,
    },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub(crate) fn domain(msg: impl Into<String>) -> Error {
    Error::Domain(msg.into())
}
