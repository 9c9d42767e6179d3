use thiserror::Error;

/// Errors raised across the toolkit.
#[derive(Debug, Error)]
pub enum Error {
    /// Input grid or table layout is malformed (ragged rows, duplicate names, ...).
    #[error("structural error: {0}")]
    Structural(String),

    /// Schema inference could not decide between candidates.
    #[error("ambiguous schema: {0}")]
    Ambiguous(String),

    /// A field could not be parsed under its declared column kind.
    #[error("parse error at row {row}, column '{column}': {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },

    /// An argument violated its precondition.
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    /// A mask could not be built or applied.
    #[error("mask error: {0}")]
    Mask(String),

    /// A linear system had no unique solution.
    #[error("singular system: {0}")]
    Singular(String),

    /// A statistic is undefined for the given input (zero variance, zero denominator).
    #[error("undefined: {0}")]
    Undefined(String),

    /// Imputation failed for a specific column.
    #[error("imputation of column '{column}' failed: {message}")]
    Imputation { column: String, message: String },

    /// Neural network training diverged or had too little data.
    #[error("training failed: {0}")]
    Training(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
