use std::io;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Failures while decoding a PTE embedding store.
#[derive(Debug, Error)]
pub enum StoreError {
    #[error("bad magic bytes {0:?}, expected \"PTEB\"")]
    BadMagic([u8; 4]),
    #[error("unsupported store version {0}")]
    UnsupportedVersion(u32),
    #[error("truncated payload: {0}")]
    Truncated(String),
    #[error("record {id:?} contains a non-finite value")]
    NonFinite { id: String },
    #[error("duplicate record id {0:?}")]
    DuplicateId(String),
    #[error("invalid record {id:?}: {reason}")]
    InvalidRecord { id: String, reason: String },
}

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}:{line}: {message}")]
    Parse {
        path: String,
        line: usize,
        message: String,
    },
    #[error("validation error: {0}")]
    Validation(String),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("training diverged at epoch {epoch}: {detail}")]
    Divergence { epoch: usize, detail: String },
    #[error("non-finite gradient for parameter {0}")]
    NonFiniteGradient(String),
    #[error("checkpoint error: {0}")]
    Checkpoint(String),
    #[error("seed {seed}: {source}")]
    Seed {
        seed: u64,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn validation(msg: impl Into<String>) -> Self {
        Error::Validation(msg.into())
    }

    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// True for errors rooted in the filesystem rather than in the data.
    pub fn is_io(&self) -> bool {
        match self {
            Error::Io(_) => true,
            Error::Seed { source, .. } => source.is_io(),
            _ => false,
        }
    }
}
