use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Broad failure class, used by the CLI to pick an exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorClass {
    Usage,
    Data,
    Numeric,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: malformed JSON on line {line}: {message}")]
    MalformedLine {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("{0}: zero_accepted (no line survived filtering)")]
    ZeroAccepted(PathBuf),

    #[error("unusable sentence: no tokens after normalization")]
    UnusableSentence,

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("unknown document id {doc_id} (index holds {doc_count})")]
    UnknownDoc { doc_id: usize, doc_count: usize },

    #[error("no valid negatives: every response in the dataset is identical")]
    NoValidNegatives,

    #[error("non-finite loss at {step}")]
    NonFinite { step: String },

    #[error("vocabulary mismatch between teacher and student")]
    VocabMismatch,

    #[error("mode {0} needs augmented pairs but none were supplied")]
    EmptyAugmented(&'static str),

    #[error("external scorer: {0}")]
    External(String),

    #[error("corrupt snapshot: {0}")]
    Snapshot(String),

    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn class(&self) -> ErrorClass {
        match self {
            Error::InvalidConfig(_) => ErrorClass::Usage,
            Error::NonFinite { .. } => ErrorClass::Numeric,
            _ => ErrorClass::Data,
        }
    }
}
