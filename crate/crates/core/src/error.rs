use std::path::PathBuf;

use thiserror::Error;

use crate::features::Schema;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("insufficient data: need at least {needed}, got {got}")]
    InsufficientData { needed: usize, got: usize },

    #[error("invalid parameter: {0}")]
    Parameter(String),

    #[error("schema mismatch: expected {expected}, got {got}")]
    Schema { expected: String, got: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("stream error: {0}")]
    Stream(String),

    #[error("corrupt model: {0}")]
    Model(String),

    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn schema(expected: Schema, got: Schema) -> Self {
        Error::Schema {
            expected: expected.to_string(),
            got: got.to_string(),
        }
    }

    pub(crate) fn dim(expected: usize, got: usize) -> Self {
        Error::Schema {
            expected: format!("dimension {expected}"),
            got: format!("dimension {got}"),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
