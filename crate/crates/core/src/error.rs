use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("empty input: {0}")]
    Empty(String),

    #[error("duplicate document ids: {}", .0.join(", "))]
    DuplicateDocuments(Vec<String>),

    #[error("keyword {0:?} is not in the vocabulary and the model has no subword path")]
    OutOfVocabulary(String),

    #[error("keyword {0:?} has no usable input units")]
    NoInputUnits(String),

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("could not draw {wanted} negatives for keyword {target} after {tries} tries")]
    NegativeSampling {
        target: u32,
        wanted: usize,
        tries: usize,
    },

    #[error("non-finite {what} at example {index} (target {target})")]
    NonFinite {
        what: &'static str,
        index: usize,
        target: u32,
    },

    #[error("{path}: bad model file: {message}")]
    Format { path: PathBuf, message: String },

    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("mismatched query sets: {0}")]
    QueryMismatch(String),
}

impl Error {
    /// Numerical failures get their own exit code in the CLI.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::NonFinite { .. })
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
