use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A malformed record in an input file, with its 1-based row number.
    #[error("{path}:{row}: {msg}")]
    Parse { path: String, row: usize, msg: String },

    /// Input violates a domain rule (duplicate dates, negative counts, ...).
    #[error("{0}")]
    Validation(String),

    #[error("dimension mismatch: {0}")]
    Dim(String),

    /// Numerical failure (non-positive-definite covariance, filter underflow).
    #[error("{0}")]
    Numerical(String),

    /// Invalid configuration or scenario.
    #[error("{0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}
