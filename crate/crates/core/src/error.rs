use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: invalid UTF-8 at byte offset {offset}")]
    Decode { path: PathBuf, offset: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },

    #[error("validation failed: {0}")]
    Validation(String),

    /// A batch with no labelled positions; callers skip it.
    #[error("batch has no labelled positions")]
    NoLabels,

    /// Rank correlation is undefined when one side has zero rank variance.
    #[error("rank variance is zero; correlation is undefined")]
    ZeroVariance,

    #[error("non-finite loss at step {step} (lr {lr}, batch {batch_digest})")]
    NonFinite { step: usize, lr: f64, batch_digest: String },

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),

    #[error("internal error: {0}")]
    Internal(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    /// True for errors caused by the environment rather than by bad inputs.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. } | Error::Decode { .. })
    }
}
