use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("duplicate document id {0}")]
    DuplicateDocId(u64),

    #[error("class {class} has {available} documents, {required} required")]
    ClassTooSmall {
        class: usize,
        available: usize,
        required: usize,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("matrix is not symmetric: entry ({row}, {col}) differs from its transpose")]
    Asymmetric { row: usize, col: usize },

    #[error("index {index} out of range for size {size}")]
    IndexOutOfRange { index: usize, size: usize },

    #[error("non-finite gradient for parameter `{0}`")]
    NonFiniteGradient(String),

    #[error("non-finite {term} loss at epoch {epoch}")]
    NonFiniteLoss { epoch: usize, term: &'static str },

    #[error("non-finite loss at perturbed coordinate {coordinate} of parameter {param}")]
    NonFiniteProbe { param: usize, coordinate: usize },

    #[error("training document {0} has no label")]
    MissingLabel(u64),

    #[error("checkpoint: {0}")]
    Checkpoint(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }
}
