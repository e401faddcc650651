use std::path::PathBuf;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: row {row}: {message}")]
    Csv {
        path: PathBuf,
        row: u64,
        message: String,
    },

    #[error("{path}: missing required column `{column}`")]
    MissingColumn { path: PathBuf, column: String },

    #[error("duplicate id `{id}` (row {row})")]
    DuplicateId { id: String, row: u64 },

    #[error("row {row}: label `{column}` has value `{value}`, expected 0 or 1")]
    InvalidLabel {
        row: u64,
        column: String,
        value: String,
    },

    #[error("non-finite value for id `{id}` in column `{column}`")]
    NonFinite { id: String, column: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("{count} ids missing from {source_name}, first: {first:?}")]
    MissingIds {
        source_name: String,
        count: usize,
        first: Vec<String>,
    },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("training data for {context} contains a single class; re-seed the fold plan")]
    SingleClass { context: String },

    #[error("unsupported operation: {0}")]
    Unsupported(String),

    #[error("serialization: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }
}
