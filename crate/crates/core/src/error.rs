use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("malformed container: {0}")]
    Container(String),

    #[error("missing chunk `{0}`")]
    MissingChunk(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("non-manifold edge ({0}, {1}) shared by {2} faces")]
    NonManifold(u32, u32, usize),

    #[error("expression basis is rank deficient: rank {rank} of {expected}")]
    RankDeficient { rank: usize, expected: usize },

    #[error("image codec error on {path}: {message}")]
    Image { path: PathBuf, message: String },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn dim(msg: impl Into<String>) -> Self {
        Error::Dimension(msg.into())
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::Invalid(msg.into())
    }

    /// Numerical failures map to exit code 2 in the CLI; everything else is 1.
    pub fn is_numerical(&self) -> bool {
        matches!(self, Error::RankDeficient { .. })
    }
}
