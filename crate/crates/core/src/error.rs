use std::path::PathBuf;

use thiserror::Error;

/// Errors produced by the embedding toolkit.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("metric matrix is not positive definite after regularization (pivot {pivot})")]
    SingularMetric { pivot: usize },

    #[error("average precision is undefined: no relevant item in the ranking")]
    UndefinedAp,

    #[error("training failed: {0}")]
    TrainingFailed(String),

    #[error("{}: cannot read file: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}: field `{field}`: {message}", path.display())]
    Load {
        path: PathBuf,
        field: String,
        message: String,
    },

    #[error("{}: ragged CSV, row {row} has {found} values, expected {expected}", path.display())]
    RaggedCsv {
        path: PathBuf,
        row: usize,
        found: usize,
        expected: usize,
    },

    #[error("sample count mismatch: view `{first}` has {first_n} samples but view `{second}` has {second_n}")]
    SampleMismatch {
        first: String,
        first_n: usize,
        second: String,
        second_n: usize,
    },

    #[error("{}: line {line}: label `{value}` is not an integer", path.display())]
    BadLabel {
        path: PathBuf,
        line: usize,
        value: String,
    },

    #[error("model file version `{found}` is not supported (expected `{expected}`)")]
    VersionMismatch { found: String, expected: String },

    #[error("cannot parse model document: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
