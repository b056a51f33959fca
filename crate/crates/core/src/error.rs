//! Error type shared across the crate.

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    /// A tensor's shape disagrees with what the operation expects. `tensor`
    /// names the offending input (parameter name, "input batch", ...).
    #[error("shape mismatch for `{tensor}`: expected {expected}, got {actual}")]
    ShapeMismatch {
        tensor: String,
        expected: String,
        actual: String,
    },

    #[error("invalid argument `{name}`: {message}")]
    InvalidArgument { name: &'static str, message: String },

    #[error("class index {class} out of range for {num_classes} classes")]
    ClassOutOfRange { class: usize, num_classes: usize },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("class {class} has only {available} examples, {needed} required")]
    InsufficientClassExamples {
        class: usize,
        needed: usize,
        available: usize,
    },

    #[error("non-finite value in {context}")]
    NonFinite { context: String },

    #[error("non-finite loss at epoch {epoch}, iteration {iteration}")]
    NonFiniteLoss { epoch: usize, iteration: usize },

    #[error("incompatible parameter sets: {details}")]
    IncompatibleParams { details: String },

    /// Malformed row in a delimited text file, with its 1-based line number.
    #[error("{path}:{line}: {message}")]
    MalformedRow {
        path: String,
        line: usize,
        message: String,
    },

    #[error("checkpoint format error: {0}")]
    CheckpointFormat(String),

    /// An internal consistency check failed. Indicates a bug, not bad input.
    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn invalid(name: &'static str, message: impl Into<String>) -> Self {
        Error::InvalidArgument {
            name,
            message: message.into(),
        }
    }
}
