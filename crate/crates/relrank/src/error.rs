//! Error type shared across the crate.

use std::fmt;
use std::io;
use std::path::PathBuf;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by loaders, losses, training, and evaluation.
///
/// Every variant names the offending file, record, or value so that
/// failures can be traced back to their input.
#[derive(Debug)]
pub enum Error {
    /// I/O failure on a named path.
    Io { path: PathBuf, source: io::Error },
    /// A file that failed to parse, with a line number when known.
    Parse {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },
    /// A record violating a type invariant (range, duplicate key, missing field).
    InvalidRecord { context: String },
    /// Vector or matrix dimensions that do not line up.
    DimensionMismatch {
        expected: usize,
        got: usize,
        context: String,
    },
    /// An id that does not resolve in the relevant table.
    MissingId { id: String, context: String },
    /// Mathematically undefined input: all-zero ratings, constant
    /// correlation input, zero-norm embedding.
    Degenerate { message: String },
    /// An invalid configuration value or flag combination.
    InvalidConfig { message: String },
}

impl fmt::Display for Error {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Error::Io { path, source } => write!(f, "{}: {source}", path.display()),
            Error::Parse {
                path,
                line,
                message,
            } => match line {
                Some(n) => write!(f, "{}:{n}: {message}", path.display()),
                None => write!(f, "{}: {message}", path.display()),
            },
            Error::InvalidRecord { context } => write!(f, "invalid record: {context}"),
            Error::DimensionMismatch {
                expected,
                got,
                context,
            } => write!(f, "dimension mismatch ({context}): expected {expected}, got {got}"),
            Error::MissingId { id, context } => write!(f, "unknown id {id:?} ({context})"),
            Error::Degenerate { message } => write!(f, "degenerate input: {message}"),
            Error::InvalidConfig { message } => write!(f, "invalid configuration: {message}"),
        }
    }
}

impl std::error::Error for Error {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        match self {
            Error::Io { source, .. } => Some(source),
            _ => None,
        }
    }
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: Option<u64>, message: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            message: message.into(),
        }
    }

    pub(crate) fn record(context: impl Into<String>) -> Self {
        Error::InvalidRecord {
            context: context.into(),
        }
    }

    pub(crate) fn degenerate(message: impl Into<String>) -> Self {
        Error::Degenerate {
            message: message.into(),
        }
    }

    pub(crate) fn config(message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            message: message.into(),
        }
    }
}
