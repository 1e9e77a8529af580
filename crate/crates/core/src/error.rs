use std::io;

use thiserror::Error;

use crate::protocol::wire::WireError;
use crate::protocol::ProtocolError;
use crate::svm::SvmError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Crate-level error. Variants are grouped so a front end can map them onto
/// process exit codes with [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("data error: {0}")]
    Data(String),

    #[error("length mismatch: expected {expected}, got {actual}")]
    LengthMismatch { expected: usize, actual: usize },

    #[error("group structure mismatch at group {index}: {detail}")]
    GroupMismatch { index: usize, detail: String },

    #[error(transparent)]
    Svm(#[from] SvmError),

    #[error(transparent)]
    Wire(#[from] WireError),

    #[error(transparent)]
    Protocol(#[from] ProtocolError),

    #[error("{stage}: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error("i/o error: {0}")]
    Io(#[from] io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn data(msg: impl Into<String>) -> Self {
        Error::Data(msg.into())
    }

    /// Exit code convention of the command-line front end:
    /// 2 configuration, 3 protocol abort, 4 data.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 2,
            Error::Protocol(_) => 3,
            Error::Stage { source, .. } => source.exit_code(),
            Error::Svm(SvmError::InvalidConfig(_)) => 2,
            _ => 4,
        }
    }
}

pub(crate) trait StageExt<T> {
    fn stage(self, stage: &'static str) -> Result<T>;
}

impl<T, E: Into<Error>> StageExt<T> for std::result::Result<T, E> {
    fn stage(self, stage: &'static str) -> Result<T> {
        self.map_err(|e| Error::Stage {
            stage,
            source: Box::new(e.into()),
        })
    }
}
