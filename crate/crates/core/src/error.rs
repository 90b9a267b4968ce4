use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("shape error: {0}")]
    Shape(String),

    /// A layer was used out of order, e.g. backward before forward.
    #[error("state error: {0}")]
    State(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("ERROR: \"{}\" folder not found!", .0.display())]
    FolderNotFound(PathBuf),

    #[error("data error: {0}")]
    Data(String),

    #[error("failed to decode image {}: {msg}", path.display())]
    Decode { path: PathBuf, msg: String },

    #[error("metrics error: {0}")]
    Metrics(String),

    #[error(transparent)]
    Checkpoint(#[from] CheckpointError),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not an OKNT checkpoint (bad magic {0:?})")]
    BadMagic([u8; 4]),
    #[error("unsupported checkpoint format version {0}")]
    UnsupportedVersion(u32),
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("corrupt checkpoint: {0}")]
    Corrupt(String),
}

impl Error {
    pub(crate) fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    /// Process exit code used by the command-line tool.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Shape(_) | Error::State(_) | Error::Config(_) | Error::Metrics(_) => 2,
            Error::FolderNotFound(_) | Error::Data(_) | Error::Decode { .. } => 3,
            Error::Checkpoint(_) | Error::Csv(_) | Error::Io(_) => 4,
        }
    }
}
