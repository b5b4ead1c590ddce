use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("duplicate record_id {0}")]
    DuplicateRecord(u64),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("no embedding for record_id {0}")]
    MissingEmbedding(u64),

    #[error("model not fitted: {0}")]
    NotFitted(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("gaussian mixture component {component} collapsed after {retries} re-seeds")]
    EmptyComponent { component: usize, retries: usize },

    #[error("shard {0} has no training records")]
    EmptyShard(usize),

    #[error("checkpoint mismatch: {0}")]
    CheckpointMismatch(String),

    #[error("malformed checkpoint {path}: {message}")]
    MalformedCheckpoint { path: PathBuf, message: String },

    #[error("unknown ids: {0:?}")]
    UnknownIds(Vec<u64>),

    #[error("deletion request {0} has no effect: all ids already deleted")]
    EmptyDeletion(u64),

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
