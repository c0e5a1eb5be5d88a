use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the fusion library.
#[derive(Debug, Error)]
pub enum FusionError {
    #[error("config line {line}: {message}")]
    ConfigParse { line: usize, message: String },

    #[error("{key} {message}")]
    InvalidConfig { key: &'static str, message: String },

    #[error("cannot read image {path}: {message}")]
    ImageRead { path: PathBuf, message: String },

    #[error("cannot write image {path}: {message}")]
    ImageWrite { path: PathBuf, message: String },

    #[error("unsupported image format in {path}: {message}")]
    UnsupportedFormat { path: PathBuf, message: String },

    #[error("{0}")]
    ColorSpace(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("image of size {height}x{width} is smaller than the {side}x{side} patch")]
    ImageTooSmall {
        height: usize,
        width: usize,
        side: usize,
    },

    #[error("inconsistent patch geometry: {0}")]
    Geometry(String),

    #[error("invalid dictionary: {0}")]
    InvalidDictionary(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, FusionError>;
