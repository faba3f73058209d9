use thiserror::Error;

use crate::numerics::TruncatedMoments;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("domain error: {0}")]
    Domain(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("matrix is not positive definite (pivot {pivot} = {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    /// The truncated mass fell below 1e-300. The log-space moments are still
    /// attached for callers that can use them.
    #[error("truncated normal mass underflows (log Z = {})", .0.log_z)]
    TailDegenerate(TruncatedMoments),

    #[error("duplicate samples: zero k-th neighbour distance at rows {indices:?}")]
    DuplicateSamples { indices: Vec<usize> },

    #[error("local covariance at sample {index} is not factorizable after jitter up to {jitter:e}")]
    SingularCovariance { index: usize, jitter: f64 },

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}
