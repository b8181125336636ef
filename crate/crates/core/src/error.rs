use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch on {axis}: expected {expected}, found {found}")]
    DimensionMismatch {
        axis: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("exact enumeration needs {needed} units but the guard allows at most {limit}")]
    Capacity { needed: usize, limit: usize },

    #[error("empty {0}")]
    Empty(&'static str),

    #[error("index {index} out of range for {len} {what}")]
    IndexOutOfRange {
        what: &'static str,
        index: usize,
        len: usize,
    },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("data error: {0}")]
    Data(String),

    #[error("non-finite value in {0}")]
    NonFinite(String),

    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    CheckpointVersion { expected: u32, found: u32 },

    #[error("checkpoint is truncated: {0}")]
    CheckpointTruncated(String),

    #[error("checkpoint is inconsistent: {0}")]
    CheckpointInconsistent(String),

    #[error("model kind `{0}` does not support this operation")]
    UnsupportedKind(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    /// Process exit status for the CLI: 1 usage, 2 data, 3 numeric failure.
    pub fn exit_code(&self) -> u8 {
        match self {
            Error::Config(_) | Error::UnsupportedKind(_) => 1,
            Error::NonFinite(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn dim(axis: &'static str, expected: usize, found: usize) -> Self {
        Error::DimensionMismatch {
            axis,
            expected,
            found,
        }
    }
}

pub(crate) fn check_dim(axis: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::dim(axis, expected, found))
    }
}
