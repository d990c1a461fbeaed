use std::path::PathBuf;

use thiserror::Error;

pub type ServiceResult<T, E = ServiceError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ServiceError {
    #[error(transparent)]
    Core(#[from] activitymon_core::Error),

    #[error("configuration: {0}")]
    Config(String),

    #[error("unknown device {0}")]
    UnknownDevice(String),

    #[error("bad token for device {0}")]
    Unauthorized(String),

    #[error("malformed record: {0}")]
    Malformed(String),

    /// Input that is well formed but cannot be accepted in the current state.
    #[error("rejected: {0}")]
    Rejected(String),

    #[error("not found: {0}")]
    NotFound(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Stored files disagree with each other or with a fresh replay.
    #[error("store corrupt: {0}")]
    Corrupt(String),
}

impl ServiceError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        ServiceError::Io {
            path: path.into(),
            source,
        }
    }
}
