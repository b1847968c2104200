use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid volume: {0}")]
    InvalidVolume(String),

    #[error("cannot ingest {path}: {reason}")]
    Ingestion { path: PathBuf, reason: String },

    #[error("frame {path} is {got:?} but earlier frames are {expected:?}")]
    DimensionMismatch {
        path: PathBuf,
        expected: (usize, usize),
        got: (usize, usize),
    },

    #[error("no frames found in {0}")]
    NoFrames(PathBuf),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("normalization group has {0} channels, expected 10")]
    GroupSize(usize),

    #[error("incomplete cross-channel group: {0}")]
    IncompleteGroup(String),

    #[error("volume {dims:?} is smaller than the {taps}-tap filter")]
    VolumeTooSmall { dims: [usize; 3], taps: usize },

    #[error("descriptor length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),

    #[error("empty gallery")]
    EmptyGallery,

    #[error("corrupt file at byte {offset}: {reason}")]
    Corrupt { offset: u64, reason: String },

    #[error("config: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
