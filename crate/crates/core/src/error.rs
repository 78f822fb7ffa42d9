use std::io;
use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("format error at byte {offset}: {reason}")]
    Format { offset: usize, reason: String },

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("line {line}: {reason}")]
    Label { line: usize, reason: String },

    #[error("ambiguous annotation: {0}")]
    Ambiguity(String),

    #[error("alignment error: chunks {missing:?} present on only one side")]
    Alignment { missing: Vec<usize> },

    #[error("empty output: {0}")]
    EmptyOutput(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },
}

impl Error {
    pub(crate) fn format(offset: usize, reason: impl Into<String>) -> Self {
        Error::Format {
            offset,
            reason: reason.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for failures of the environment (filesystem) rather than of the input data.
    pub fn is_io(&self) -> bool {
        matches!(self, Error::Io { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
