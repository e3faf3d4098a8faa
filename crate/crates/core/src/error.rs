use std::io;

use thiserror::Error;

/// Errors raised anywhere in the crate.
#[derive(Debug, Error)]
pub enum Error {
    /// Tensor shapes or image dimensions are incompatible with the operation.
    #[error("dimension error: {0}")]
    Dimension(String),

    /// A class label or other index fell outside its valid range.
    #[error("index error: {0}")]
    Index(String),

    /// An API was called in a state where it cannot proceed.
    #[error("usage error: {0}")]
    Usage(String),

    #[error("unsupported size {height}x{width}: dimensions must be powers of two, pad with pad_to_pow2 first")]
    UnsupportedSize { height: usize, width: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("parse error at byte offset {offset}: {message}")]
    Parse { offset: usize, message: String },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("training diverged at step {step} ({player} loss is not finite)")]
    Diverged { step: usize, player: &'static str },

    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),

    #[error("checkpoint version {found} is not supported (expected {expected})")]
    VersionMismatch { found: u32, expected: u32 },

    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn dim_err<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::Dimension(msg.into()))
}
