use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    /// A malformed record. `line` is 1-based.
    #[error("{origin}:{line}: {message}")]
    Parse {
        origin: String,
        line: usize,
        message: String,
    },

    #[error("{origin}:{line}: invalid UTF-8")]
    Encoding { origin: String, line: usize },

    #[error("duplicate {kind} id `{id}`")]
    DuplicateId { kind: &'static str, id: String },

    #[error("dimension mismatch for `{id}`: expected {expected}, got {actual}")]
    DimensionMismatch {
        id: String,
        expected: usize,
        actual: usize,
    },

    #[error("{}: size mismatch, manifest implies {expected} bytes but file has {actual}", path.display())]
    SizeMismatch {
        path: PathBuf,
        expected: u64,
        actual: u64,
    },

    #[error("id `{0}` not found")]
    NotFound(String),

    #[error("vector `{0}` has zero norm")]
    ZeroNorm(String),

    #[error("invalid manifest: {0}")]
    Manifest(String),

    #[error("invalid ranking: {0}")]
    InvalidRanking(String),

    #[error("{0}")]
    InvalidArgument(String),

    #[error("scorer failed on pair `{pair_id}`: {message}")]
    Scorer { pair_id: String, message: String },

    #[error("external process: {0}")]
    External(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(
        origin: impl Into<String>,
        line: usize,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            origin: origin.into(),
            line,
            message: message.into(),
        }
    }

    /// True when the failure came from a child process (bridge or scorer)
    /// rather than from the data handed to us.
    pub fn is_external(&self) -> bool {
        matches!(self, Error::Scorer { .. } | Error::External(_))
    }
}
