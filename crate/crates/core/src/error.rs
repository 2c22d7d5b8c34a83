use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed input file (JSON, CSV, model file).
    #[error("parse error at {location}: {message}")]
    Parse { location: String, message: String },

    /// Well-formed input that violates a data-model invariant.
    #[error("validation error: {0}")]
    Validation(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    /// Numeric data unusable for training or scoring.
    #[error("data error: {0}")]
    Data(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("training error: {0}")]
    Training(String),

    #[error("bug {bug_id}: {source}")]
    Bug {
        bug_id: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(location: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            location: location.into(),
            message: message.to_string(),
        }
    }

    pub fn in_bug(self, bug_id: &str) -> Self {
        Error::Bug {
            bug_id: bug_id.to_string(),
            source: Box::new(self),
        }
    }

    /// True for I/O and file-format failures, false for configuration or data problems.
    pub fn is_io_or_format(&self) -> bool {
        match self {
            Error::Io { .. } | Error::Parse { .. } => true,
            Error::Bug { source, .. } => source.is_io_or_format(),
            _ => false,
        }
    }
}
