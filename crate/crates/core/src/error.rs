use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum KbnnError {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },

    #[error("matrix is not square ({rows}x{cols})")]
    NotSquare { rows: usize, cols: usize },

    #[error("symmetric factorization failed even with jitter {jitter:e}")]
    Singular { jitter: f64 },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("numeric failure in layer {layer}: {detail}")]
    Numeric { layer: usize, detail: String },

    #[error("failed to load model: field `{field}`: {reason}")]
    ModelLoad { field: String, reason: String },

    #[error("failed to load dataset {path}: {reason}")]
    DataLoad { path: PathBuf, reason: String },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T, E = KbnnError> = std::result::Result<T, E>;
