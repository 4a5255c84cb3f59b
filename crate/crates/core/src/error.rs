use std::path::PathBuf;

use thiserror::Error;

use crate::tiny_lm::checkpoint::CheckpointError;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors surfaced by every module of the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// A documented precondition of an operation was not met.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("matrix is not positive definite (pivot {pivot}, value {value:e})")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("triangular factor is singular (zero diagonal at {0})")]
    Singular(usize),

    #[error("generation stalled: {segments} consecutive segments produced no tokens")]
    GenerationStalled { segments: usize },

    #[error("corpus too small: {len} tokens available, {need} required")]
    CorpusTooSmall { len: usize, need: usize },

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("calibration file: {0}")]
    CalibFormat(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Returns a contract violation unless `cond` holds.
#[inline]
pub(crate) fn require(cond: bool, msg: impl FnOnce() -> String) -> Result<()> {
    if cond {
        Ok(())
    } else {
        Err(Error::Contract(msg()))
    }
}
