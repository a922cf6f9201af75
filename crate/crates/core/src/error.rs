use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::scorer::ScorerError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: usize, msg: String },

    #[error("duplicate passage id `{0}`")]
    DuplicatePassage(String),

    #[error("corpus is empty")]
    EmptyCorpus,

    #[error("index file {}: {msg}", path.display())]
    IndexFormat { path: PathBuf, msg: String },

    #[error("unknown passage id `{0}`")]
    UnknownPassage(String),

    #[error("unknown query id `{0}`")]
    UnknownQuery(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error(transparent)]
    Scorer(#[from] ScorerError),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(path: impl Into<PathBuf>, line: usize, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            line,
            msg: msg.into(),
        }
    }
}
