//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// A value was outside its legal domain (negative time, label too wide, ...).
    #[error("domain error: {0}")]
    Domain(String),

    /// Encoded bytes or words that do not form a valid stream. `offset` is the
    /// position (octet or word index) where decoding failed.
    #[error("format error at offset {offset}: {message}")]
    Format { offset: usize, message: String },

    /// A hard resource bound (playback memory, trace memory) would be exceeded.
    #[error("capacity error: {0}")]
    Capacity(String),

    /// A text input (spike file, config) failed to parse. 1-based line number.
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Structurally valid input that violates a documented invariant.
    #[error("validation error: {0}")]
    Validation(String),

    /// Observations that cannot have come from the claimed stimulus,
    /// e.g. more traced pulses than sent pulses for one source.
    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn domain(msg: impl Into<String>) -> Self {
        Error::Domain(msg.into())
    }

    pub fn format(offset: usize, msg: impl Into<String>) -> Self {
        Error::Format {
            offset,
            message: msg.into(),
        }
    }

    pub fn capacity(msg: impl Into<String>) -> Self {
        Error::Capacity(msg.into())
    }

    pub fn parse(line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: msg.into(),
        }
    }

    pub fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub fn consistency(msg: impl Into<String>) -> Self {
        Error::Consistency(msg.into())
    }
}
