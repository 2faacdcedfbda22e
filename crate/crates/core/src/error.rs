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

    #[error("{path}: malformed manifest: {message}")]
    Manifest { path: PathBuf, message: String },

    #[error("{path}: shape mismatch: expected {expected_bytes} bytes for shape {shape:?}, file has {actual_bytes} bytes")]
    ShapeMismatch {
        path: PathBuf,
        shape: Vec<usize>,
        expected_bytes: u64,
        actual_bytes: u64,
    },

    #[error("{path}: non-finite value at flat index {index} (byte offset {offset})")]
    NonFinite {
        path: PathBuf,
        index: usize,
        offset: u64,
    },

    #[error("{path}: {message}")]
    Csv { path: PathBuf, message: String },

    #[error("duplicate OOD dataset name `{0}`")]
    DuplicateName(String),

    #[error("degenerate input: {0}")]
    Degenerate(&'static str),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("sample {index}: {source}")]
    AtSample {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("dataset `{name}`: {source}")]
    InDataset {
        name: String,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn at_sample(self, index: usize) -> Self {
        Error::AtSample {
            index,
            source: Box::new(self),
        }
    }

    pub(crate) fn in_dataset(self, name: &str) -> Self {
        Error::InDataset {
            name: name.to_string(),
            source: Box::new(self),
        }
    }

    /// True when the root cause is an operating-system I/O failure.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io { .. } => true,
            Error::AtSample { source, .. } | Error::InDataset { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
