//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("matrix not positive definite after diagonal jitter up to {max_jitter:e}")]
    NotPositiveDefinite { max_jitter: f64 },
    #[error("unknown config id {0}")]
    UnknownConfig(u64),
    #[error("non-contiguous epoch for config {config_id}: expected {expected}, got {got}")]
    NonContiguousEpoch {
        config_id: u64,
        expected: u64,
        got: u64,
    },
    #[error("problem size exceeds guard: {0}")]
    SizeGuard(String),
    #[error("unsupported state schema `{found}` (expected `{expected}`)")]
    SchemaMismatch { expected: String, found: String },
    #[error("malformed document: {0}")]
    Malformed(String),
    #[error("slice sampler failed to shrink onto the target after {0} steps")]
    SliceShrinkExhausted(usize),
    #[error("round {round}: {source}")]
    Round {
        round: u64,
        #[source]
        source: Box<Error>,
    },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// Attach the optimization round in which the error surfaced.
    pub fn in_round(self, round: u64) -> Error {
        Error::Round {
            round,
            source: Box::new(self),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
