//! Error type shared by all modules.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    /// Configuration file problems, with a 1-based line number when known.
    #[error("config error at line {line}: {msg}")]
    Config { line: usize, msg: String },

    /// A model-level invariant was violated while building structures.
    #[error("invalid model: {0}")]
    InvalidModel(String),

    /// Vector/matrix shapes do not match the basis they are used with.
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    /// A conserved quantity drifted past its tolerance during evolution.
    #[error("invariant violation: {0}")]
    InvariantViolation(String),

    /// A truncated basis would exceed the configured hard cap.
    #[error("basis cap overflow: {0}")]
    CapOverflow(String),

    /// Coherent displacement would lose more norm than allowed.
    #[error("truncation tail too large: {0}")]
    TailTooLarge(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
