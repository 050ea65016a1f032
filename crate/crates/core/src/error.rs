use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A malformed line in an input file. `line` is 1-based.
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("vector dimension mismatch: expected {expected}, got {got}")]
    Dimension { expected: usize, got: usize },

    #[error("degenerate vector: {0}")]
    DegenerateVector(String),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("id {0} already present")]
    Conflict(u64),

    #[error("translation memory is empty")]
    EmptyMemory,

    #[error("vector index is empty")]
    EmptyIndex,

    /// The embedding provider failed while serving the batch starting at
    /// `first_index` of the caller's input.
    #[error("embedding provider failed on batch starting at text {first_index}: {message}")]
    Provider { first_index: usize, message: String },

    #[error("span producer `{producer}` violated its contract: {message}")]
    ProducerContract { producer: String, message: String },

    #[error("store file is corrupt: {0}")]
    Format(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
