use std::path::PathBuf;

use thiserror::Error;

use crate::checkpoint::CheckpointError;
use crate::idx::IdxError;
use crate::pgm::PgmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("image has no foreground pixels above threshold 0.5")]
    NoForeground,

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("exemplar manifest: {0}")]
    Manifest(String),

    #[error("missing label {0}")]
    MissingLabel(u8),

    #[error("duplicate label {0}")]
    DuplicateLabel(u8),

    #[error("exemplar for label {label} ({path}): {source}")]
    Exemplar {
        label: u8,
        path: PathBuf,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Pgm(#[from] PgmError),

    /// Every sampled component of a tensor sat on a max-pool kink of the
    /// batch loss.
    #[error("no kink-free component of {tensor} after {draws} draws")]
    AllKinks { tensor: &'static str, draws: usize },

    #[error(transparent)]
    Idx(#[from] IdxError),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }

    pub(crate) fn file(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::File {
            path: path.into(),
            source,
        }
    }
}
