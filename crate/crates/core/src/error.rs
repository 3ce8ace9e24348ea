use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A caller broke an operation's precondition (bad shape, label out of range, ...).
    #[error("contract violation: {0}")]
    Contract(String),

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    ModelLoad(#[from] ModelLoadError),

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

/// Failures while parsing the big-endian IDX container.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum IdxError {
    #[error("bad IDX magic: expected {expected:#010x}, found {found:#010x}")]
    BadMagic { expected: u32, found: u32 },
    #[error("truncated IDX payload: expected {expected} bytes, found {found}")]
    Truncated { expected: usize, found: usize },
    #[error("IDX item count mismatch: {images} images vs {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("unsupported IDX geometry: {0}")]
    Geometry(String),
}

/// Typed failures of `load_model`.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum ModelLoadError {
    #[error("unsupported model format version {found:?} (expected {expected:?})")]
    VersionMismatch { expected: String, found: String },
    #[error("malformed model document: {0}")]
    Malformed(String),
    #[error("parameter shape inconsistent with architecture: {0}")]
    ShapeInconsistency(String),
}
