use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error in {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("unknown input format '{0}' (expected csv or jsonl)")]
    UnknownFormat(String),

    #[error("zero surviving rows in {path} ({dropped} dropped)")]
    NoRows { path: PathBuf, dropped: usize },

    #[error("{path}:{line}: {msg}")]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("empty corpus")]
    EmptyCorpus,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("series too short: {len} samples, need at least {needed}")]
    SeriesTooShort { len: usize, needed: usize },

    #[error("insufficient overlap: {0} common days, need at least 3")]
    InsufficientOverlap(usize),

    #[error("zero variance over the overlapping days")]
    ZeroVariance,

    #[error("key sets differ: {0}")]
    KeyMismatch(String),

    #[error("invalid sentiment probabilities: {0}")]
    InvalidProbs(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn csv(path: impl Into<PathBuf>, source: csv::Error) -> Self {
        Error::Csv {
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
