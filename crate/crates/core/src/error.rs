use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("non-finite coordinate at index {index}")]
    NonFinite { index: usize },

    #[error("sample set too small: need at least {needed} samples, have {available}")]
    InsufficientSamples { needed: usize, available: usize },

    #[error("value {value} outside the unit interval in dimension {dim}")]
    OutOfRange { dim: usize, value: f64 },

    #[error("index {index} out of range for {levels} levels in dimension {dim}")]
    IndexOutOfRange {
        dim: usize,
        index: usize,
        levels: usize,
    },

    #[error("codebook is empty")]
    EmptyCodebook,

    #[error("malformed dump: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
