use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the library.
#[derive(Debug, Error)]
pub enum RrnError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("format error in {path}: {reason}")]
    Format { path: PathBuf, reason: String },

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("render error: {0}")]
    Render(String),

    #[error("shape error: {0}")]
    Shape(String),

    #[error("numeric error in layer {layer}: {reason}")]
    Numeric { layer: usize, reason: String },

    #[error("checkpoint header is corrupt: {0}")]
    CorruptHeader(String),

    #[error("checkpoint payload length mismatch: expected {expected} bytes, found {found}")]
    PayloadLength { expected: u64, found: u64 },

    #[error("undefined centroid: image has zero total intensity")]
    UndefinedCentroid,

    #[error("stratification error: {0}")]
    Stratification(String),

    #[error("incomplete analysis input: {0}")]
    Completeness(String),
}

pub type Result<T, E = RrnError> = std::result::Result<T, E>;

impl RrnError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        RrnError::Io {
            path: path.into(),
            source,
        }
    }
}
