use std::path::PathBuf;

use activitymon_core::Error as CoreError;
use activitymon_service::ServiceError;
use thiserror::Error;

pub type CliResult<T> = Result<T, CliError>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] CoreError),

    #[error(transparent)]
    Service(#[from] ServiceError),

    #[error("{0}")]
    Usage(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Talking to a running server failed.
    #[error("server: {0}")]
    Remote(String),
}

/// Process exit statuses. 2 is also what argument parsing uses.
pub mod exit {
    pub const FAILURE: u8 = 1;
    pub const USAGE: u8 = 2;
    pub const MISSING_INPUT: u8 = 3;
    pub const SCHEMA: u8 = 4;
    pub const CORRUPT_MODEL: u8 = 5;
    pub const DATA: u8 = 6;
}

fn core_code(e: &CoreError) -> u8 {
    match e {
        CoreError::Io { source, .. } if source.kind() == std::io::ErrorKind::NotFound => exit::MISSING_INPUT,
        CoreError::Io { .. } => exit::FAILURE,
        CoreError::Schema { .. } => exit::SCHEMA,
        CoreError::Model(_) => exit::CORRUPT_MODEL,
        CoreError::Parameter(_) => exit::USAGE,
        CoreError::EmptyInput(_)
        | CoreError::InsufficientData { .. }
        | CoreError::Data(_)
        | CoreError::Stream(_)
        | CoreError::Parse { .. } => exit::DATA,
    }
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) => core_code(e),
            CliError::Service(ServiceError::Core(e)) => core_code(e),
            CliError::Service(ServiceError::Config(_)) | CliError::Usage(_) => exit::USAGE,
            CliError::Service(ServiceError::Io { source, .. }) | CliError::Io { source, .. }
                if source.kind() == std::io::ErrorKind::NotFound =>
            {
                exit::MISSING_INPUT
            }
            CliError::Service(ServiceError::Malformed(_) | ServiceError::Rejected(_) | ServiceError::Corrupt(_)) => {
                exit::DATA
            }
            _ => exit::FAILURE,
        }
    }
}
