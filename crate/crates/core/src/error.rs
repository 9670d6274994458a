use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the leaning library.
#[derive(Debug, Error)]
pub enum Error {
    /// A record in an input file could not be parsed.
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    /// Input data parsed but violates a structural constraint.
    #[error("validation failed: {0}")]
    Validation(String),

    /// A configuration value is missing, out of range or inconsistent.
    #[error("invalid configuration: {0}")]
    Config(String),

    /// Arguments to an operation violate its preconditions.
    #[error("invalid input: {0}")]
    InvalidInput(String),

    /// Model training could not proceed.
    #[error("training failed: {0}")]
    Training(String),

    #[error("i/o error on {path}: {source}")]
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
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
