use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is out of range or inconsistent.
    #[error("invalid configuration: `{field}`: {message}")]
    Config { field: String, message: String },

    /// Input data violates a precondition (unknown ids, bad degrees, ...).
    #[error("invalid input: {0}")]
    Input(String),

    #[error("insufficient seeds: requested {requested}, only {available} qualify (short by {})", requested - available)]
    InsufficientSeeds { requested: usize, available: usize },

    #[error("estimation failed: {0}")]
    Estimation(String),

    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: String,
        line: u64,
        column: u64,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by configuration rather than data or runtime failures.
    pub fn is_validation(&self) -> bool {
        matches!(self, Error::Config { .. })
    }
}
