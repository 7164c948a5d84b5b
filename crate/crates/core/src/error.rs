//! Error type shared across the crate.

use thiserror::Error;

/// Errors produced by encoding, scoring, evaluation and training.
#[derive(Debug, Error)]
pub enum Error {
    /// Malformed or unusable caller input (empty prompt, missing image, ...).
    #[error("invalid input: {0}")]
    Input(String),

    /// Inconsistent configuration (scheme/task mismatch, bad temperature, ...).
    #[error("invalid config: {0}")]
    Config(String),

    /// Numerically undefined operation (zero vector, non-finite value, ...).
    #[error("numeric error: {0}")]
    Numeric(String),

    /// The encoder backend failed or is unavailable.
    #[error("backend error: {0}")]
    Backend(String),

    /// Correlation is undefined for the given vectors (too short or constant).
    #[error("undefined correlation: {0}")]
    UndefinedCorrelation(String),

    /// Dataset manifest or MOS column problems.
    #[error("dataset error: {0}")]
    Dataset(String),

    /// Training aborted; the message references the diagnostic dump when one exists.
    #[error("training aborted: {0}")]
    Train(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Image(#[from] image::ImageError),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
