use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("I/O error: {0}")]
    Stream(#[from] io::Error),

    #[error("malformed capture: {0}")]
    Capture(String),

    #[error("unsupported capture: {0}")]
    Unsupported(String),

    #[error("invalid event log line {line}: {reason}")]
    EventLog { line: usize, reason: String },

    #[error("invalid roster: {0}")]
    Roster(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("invalid signature: {0}")]
    Signature(String),

    #[error("signature extraction failed: {0}")]
    Extraction(String),

    #[error("invalid profile: {0}")]
    Profile(String),

    #[error("dummy placement failed after {attempts} attempts")]
    Placement { attempts: usize },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
