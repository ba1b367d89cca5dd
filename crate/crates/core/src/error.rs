use std::path::{Path, PathBuf};

use thiserror::Error;

use crate::llm_gateway::GatewayError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at row {row}: {message} (raw: {raw:?})")]
    Parse { row: usize, raw: String, message: String },

    #[error("unknown quality attribute {0:?}")]
    UnknownAttribute(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("capacity error: {what} requires {requested} but only {available} available")]
    Capacity {
        what: String,
        requested: usize,
        available: usize,
    },

    #[error("not found: {0}")]
    NotFound(String),

    #[error("not authorized: {0}")]
    Unauthorized(String),

    #[error("conflict: {0}")]
    Conflict(String),

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("unsupported format_version {found} in {path} (expected {expected})")]
    FormatVersion { path: PathBuf, found: u32, expected: u32 },

    #[error(transparent)]
    Gateway(#[from] GatewayError),

    #[error("storage error: {0}")]
    Store(#[from] rusqlite::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn io(path: impl AsRef<Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().to_path_buf(),
            source,
        }
    }

    /// Stable machine-readable code used in HTTP error bodies and the C ABI.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::UnknownAttribute(_) => "unknown_attribute",
            Error::InvalidArgument(_) => "invalid_argument",
            Error::Validation(_) => "validation",
            Error::Capacity { .. } => "capacity",
            Error::NotFound(_) => "not_found",
            Error::Unauthorized(_) => "unauthorized",
            Error::Conflict(_) => "conflict",
            Error::Integrity(_) => "integrity",
            Error::FormatVersion { .. } => "format_version",
            Error::Gateway(GatewayError::Timeout { .. }) => "timeout",
            Error::Gateway(GatewayError::Credential { .. }) => "credential",
            Error::Gateway(_) => "transport",
            Error::Store(_) => "storage",
            Error::Json(_) => "json",
            Error::Csv(_) => "csv",
        }
    }
}
