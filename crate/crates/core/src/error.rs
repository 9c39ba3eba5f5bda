use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the dispatch library.
#[derive(Debug, Error)]
pub enum RldError {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("invalid case: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("version error: {0}")]
    Version(String),

    #[error("numerical breakdown in LP solver: {0}")]
    NumericalBreakdown(String),

    #[error("internal consistency error: {0}")]
    Internal(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("training aborted: {0}")]
    TrainingAborted(String),
}

pub type Result<T> = std::result::Result<T, RldError>;

impl RldError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RldError::Io {
            path: path.into(),
            source,
        }
    }
}
