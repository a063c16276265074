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

    #[error("{path}:{line}: {message}")]
    Manifest {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("cannot decode audio {path}: {message}")]
    Audio { path: PathBuf, message: String },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("shape mismatch: expected {expected}, got {actual}")]
    Shape { expected: String, actual: String },

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("config digest mismatch: checkpoint {found}, expected {expected}")]
    DigestMismatch { expected: String, found: String },

    #[error("non-finite {component} value: {value}")]
    NonFinite { component: &'static str, value: f64 },

    #[error("training diverged at epoch {epoch}, batch {batch} ({dataset}): loss {loss}")]
    Diverged {
        epoch: usize,
        batch: usize,
        dataset: String,
        loss: f64,
    },

    #[error("config field `{field}`: {message}")]
    Config { field: String, message: String },

    #[error("coincident centroids for classes `{a}` and `{b}`")]
    CoincidentCentroids { a: String, b: String },

    #[error("embedding table error: {0}")]
    Table(String),

    #[error("operation not permitted on frozen encoder: {0}")]
    Frozen(&'static str),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn config(field: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            message: message.into(),
        }
    }
}
