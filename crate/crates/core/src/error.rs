use std::path::PathBuf;

use thiserror::Error;

use crate::lattice::CenteredIndex;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("index {index} is outside the centered range of a {d}x{d} grid")]
    IndexOutOfRange { index: CenteredIndex, d: usize },

    #[error("translation {0} is not a point of the lattice")]
    NotInLattice(CenteredIndex),

    #[error("p = 1 leaves the rotation sector empty; the rigid-motion model needs p > 1")]
    EmptySector,

    #[error("grid mismatch: expected d={expected}, got d={found}")]
    GridMismatch { expected: String, found: String },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("kappa = {kappa} is out of range: need 1 <= kappa <= floor(q^2/4) = {bound}")]
    KappaBound { kappa: usize, bound: usize },

    #[error("reduced problem mode mismatch: {0}")]
    ModeMismatch(&'static str),

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: cannot decode image: {message}")]
    Decode { path: PathBuf, message: String },

    #[error("{path}: image is {width}x{height}, smaller than the {d}x{d} crop")]
    ImageTooSmall {
        path: PathBuf,
        width: u32,
        height: u32,
        d: usize,
    },

    #[error("manifest: {0}")]
    Manifest(String),

    #[error("corrupt model file: {0}")]
    CorruptModel(String),

    #[error("unsupported model file version {0}")]
    VersionMismatch(u32),

    #[error("model file checksum mismatch")]
    ChecksumMismatch,
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code class: 2 parameter errors, 3 data errors, 4 numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_)
            | Error::IndexOutOfRange { .. }
            | Error::NotInLattice(_)
            | Error::EmptySector
            | Error::GridMismatch { .. }
            | Error::KappaBound { .. }
            | Error::ModeMismatch(_)
            | Error::EmptyDataset => 2,
            Error::NonFinite(_) | Error::Numerical(_) => 4,
            Error::Io { .. }
            | Error::Decode { .. }
            | Error::ImageTooSmall { .. }
            | Error::Manifest(_)
            | Error::CorruptModel(_)
            | Error::VersionMismatch(_)
            | Error::ChecksumMismatch => 3,
        }
    }
}
