use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the counting pipeline.
#[derive(Debug, Error)]
pub enum SimcoError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid config: {0}")]
    Config(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("type sampling exhausted retries: {0}")]
    TypeSpaceExhausted(String),

    #[error("seeds not separable")]
    SeedsNotSeparable,

    #[error("seed binding failed: {0}")]
    SeedBinding(String),

    #[error("empty {0} split")]
    EmptySplit(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("ground truth sums to zero")]
    ZeroGroundTruth,

    #[error("malformed {what}: {detail}")]
    Malformed { what: &'static str, detail: String },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, SimcoError>;

impl SimcoError {
    /// Wrap an i/o error together with the path that caused it.
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        SimcoError::Io {
            path: path.into(),
            source,
        }
    }
}
