//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: {0}")]
    InvalidShape(String),
    #[error("label out of range: {0}")]
    InvalidLabel(String),
    #[error("invalid span: {0}")]
    InvalidSpan(String),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
    #[error("variant mismatch: {0}")]
    InvalidVariant(String),
    #[error("uncovered slot: {0}")]
    UncoveredSlot(String),
    #[error("parse error at line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("numeric failure: {0}")]
    Numeric(String),
    #[error("training diverged at epoch {epoch}, batch {batch}")]
    Diverged { epoch: usize, batch: usize },
    #[error("model file error: {0}")]
    ModelFormat(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            msg: msg.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
