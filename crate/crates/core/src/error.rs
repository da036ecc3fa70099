use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Errors surfaced by the engine.
///
/// Variants fall into three families (I/O, format, precondition) which the
/// CLI and the C ABI map onto stable numeric codes.
#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },

    #[error("unsupported schema '{found}', expected '{expected}'")]
    Schema { expected: String, found: String },

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("no scoreable evidence for utterance '{0}'")]
    NoEvidence(String),
}

/// Coarse error family, used for process exit codes and FFI status codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Io,
    Format,
    Precondition,
}

impl ErrorKind {
    pub fn exit_code(self) -> i32 {
        match self {
            ErrorKind::Io => 2,
            ErrorKind::Format => 3,
            ErrorKind::Precondition => 4,
        }
    }
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::Io { .. } => ErrorKind::Io,
            Error::Malformed { .. } | Error::Schema { .. } | Error::InvalidProfile(_) => {
                ErrorKind::Format
            }
            Error::DimensionMismatch { .. }
            | Error::InvalidInput(_)
            | Error::InvalidConfig(_)
            | Error::NoEvidence(_) => ErrorKind::Precondition,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: usize, message: impl Into<String>) -> Self {
        Error::Malformed {
            line,
            message: message.into(),
        }
    }
}
