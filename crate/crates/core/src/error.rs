use std::path::PathBuf;

use thiserror::Error;

use crate::lm::Direction;
use crate::vocab::TokenId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("training corpus is empty")]
    EmptyCorpus,

    #[error("n-gram order {order} is outside 1..={max}")]
    OrderOutOfRange { order: usize, max: usize },

    #[error("token id {id} is not in the vocabulary (size {vocab_size})")]
    InvalidToken { id: TokenId, vocab_size: usize },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("language model direction {found:?} does not match the required {expected:?}")]
    DirectionMismatch { expected: Direction, found: Direction },

    #[error("language models do not share a vocabulary")]
    VocabularyMismatch,

    #[error("objective is not finite at initialization (context {context})")]
    NonFiniteObjective { context: usize },

    #[error("no candidates survived post-processing")]
    NoCandidates,

    #[error("{0} must not be empty")]
    EmptyInput(&'static str),

    #[error("model file parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("model file field `{field}` is invalid: {message}")]
    InvalidField { field: String, message: String },

    #[error("unsupported model format version {found} (expected {expected})")]
    VersionMismatch { found: u64, expected: u64 },

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn invalid(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
