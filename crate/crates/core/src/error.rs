use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("unsupported schema version {found:?} (expected {expected:?})")]
    SchemaVersion { found: String, expected: String },

    #[error("malformed record {index}: {message}")]
    MalformedRecord { index: usize, message: String },

    #[error("tensor archive {path}: {message}")]
    Archive { path: PathBuf, message: String },

    #[error("checkpoint rejected: {0}")]
    Checkpoint(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("training diverged at step {step}: lane={lane} reg={reg} cls={cls}")]
    Diverged { step: usize, lane: f64, reg: f64, cls: f64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io { path: path.into(), source }
    }
}
