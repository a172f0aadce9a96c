use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// A record that could not be decoded. `line` is 1-based.
    #[error("{shard}:{line}: field `{field}`: {message}")]
    Record {
        shard: PathBuf,
        line: usize,
        field: String,
        message: String,
    },

    #[error("duplicate id `{0}`")]
    DuplicateId(String),

    #[error("invalid binary data in {path}: {message}")]
    Format { path: PathBuf, message: String },

    #[error("batch at step {step} has {found} slots, expected {expected}")]
    BatchSize {
        step: usize,
        found: usize,
        expected: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("gram has length {found}, index order is {expected}")]
    GramLength { found: usize, expected: usize },

    #[error("offset {offset} out of range for document {doc} of length {len}")]
    OutOfRange { doc: u32, offset: usize, len: usize },

    #[error("unknown document ref {0}")]
    UnknownDoc(u32),

    #[error("posting table overflow: {postings} postings exceed the limit of {limit}; split the corpus into smaller shards")]
    PostingOverflow { postings: u64, limit: u64 },

    #[error("no English name configured for language tag `{0}`")]
    UnknownLanguage(String),

    #[error("schedule needs {required} slots but the window offers {available}")]
    Capacity { required: u64, available: u64 },

    #[error("stream does not match schedule: {0}")]
    Mismatch(String),

    #[error("unknown format `{0}`")]
    UnknownFormat(String),

    #[error("missing hypotheses for examples: {}", .0.join(", "))]
    MissingHypotheses(Vec<String>),

    #[error("{0}")]
    Invalid(String),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }
}
