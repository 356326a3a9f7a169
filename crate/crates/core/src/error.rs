use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("index {index} out of range for length {len}")]
    IndexOutOfRange { index: usize, len: usize },

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid argument: {0}")]
    InvalidArgument(&'static str),

    #[error("sampling tree has nonpositive total weight {0}")]
    EmptyDistribution(f64),

    #[error("non-finite parameters after step {step}")]
    Divergence { step: usize },

    #[error("metric unsupported for this problem kind: {0}")]
    UnsupportedMetric(&'static str),
}
