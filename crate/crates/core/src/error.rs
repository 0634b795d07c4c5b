use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum ModelError {
    #[error("unknown TA id {0}")]
    UnknownTa(String),
    #[error("unknown shift id {0}")]
    UnknownShift(String),
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("parse error: {0}")]
    Parse(String),
}

/// A data row that could not be read; `line` is 1-based in the source file.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct RowReject {
    pub line: u64,
    pub reason: String,
}
