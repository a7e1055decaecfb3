use alloc::string::String;

use crate::corpus::LengthBucket;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// A parameter is out of range. `field` is a dotted path to the offending value.
    #[error("invalid configuration at `{field}`: {reason}")]
    Config { field: String, reason: String },

    #[error(
        "bucket {bucket} has {available} documents but the plan needs {required} (short by {})",
        required - available
    )]
    InsufficientDocuments {
        bucket: LengthBucket,
        available: usize,
        required: usize,
    },

    #[error("usage error: {0}")]
    Usage(String),

    #[error("token id {token} is outside the model vocabulary of size {vocab_size}")]
    VocabularyMismatch { token: u32, vocab_size: usize },

    #[error("invalid model: {0}")]
    Model(String),
}

impl Error {
    pub(crate) fn config(field: impl Into<String>, reason: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            reason: reason.into(),
        }
    }
}
