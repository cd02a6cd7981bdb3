use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller-supplied value violates an operation's precondition.
    #[error("invalid input: {0}")]
    Input(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("point id {id} out of range for dataset of {n} points")]
    InvalidPointId { id: usize, n: usize },

    /// Malformed bytes in a dataset or structure file.
    #[error("format error at byte offset {offset}: {message}")]
    Format { offset: u64, message: String },

    /// Malformed row in a CSV file (rows are counted from zero).
    #[error("format error at row {row}: {message}")]
    Row { row: usize, message: String },

    #[error("dataset is empty")]
    EmptyDataset,

    #[error("unsupported: {0}")]
    Unsupported(String),

    #[error("table sequence exhausted: table {index} requested, at most {max} tables")]
    SequenceExhausted { index: usize, max: usize },

    #[error("serialized structure has version {found}, this build reads version {expected}")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn input(msg: impl Into<String>) -> Self {
        Error::Input(msg.into())
    }

    pub(crate) fn format(offset: u64, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }
}
