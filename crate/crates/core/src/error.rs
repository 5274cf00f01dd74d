use std::path::PathBuf;

/// Errors produced anywhere in the search lab.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("invalid search space: {0}")]
    InvalidSpace(String),

    #[error("search space has {size} architectures, more than the limit of {limit}")]
    SpaceTooLarge { size: String, limit: u64 },

    #[error("parse error: {0}")]
    Parse(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("stage mismatch: {0}")]
    StageMismatch(String),

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("architecture {0} is not in the table")]
    UnknownArchitecture(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("schema error at `{key}`: {message}")]
    Schema { key: String, message: String },

    #[error("inconsistent traces: {0}")]
    InconsistentTraces(String),

    #[error("trial {trial} ({method}) failed: {source}")]
    Trial {
        trial: String,
        method: String,
        #[source]
        source: Box<Error>,
    },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

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

    pub(crate) fn schema(key: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            key: key.into(),
            message: message.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
