use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch in {op}: {left:?} vs {right:?}")]
    Shape {
        op: &'static str,
        left: (usize, usize),
        right: (usize, usize),
    },

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("non-finite value: {0}")]
    NonFinite(String),

    #[error("metric is undefined: {0}")]
    UndefinedMetric(String),

    #[error("unsupported instance size: {0}")]
    Capability(String),

    #[error("budget invariant breached: {0}")]
    BudgetBreach(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing artifacts in {}: expected {}", dir.display(), expected.join(", "))]
    MissingArtifacts { dir: PathBuf, expected: Vec<String> },

    #[error("malformed {what} in {}: {msg}", path.display())]
    Parse {
        what: &'static str,
        path: PathBuf,
        msg: String,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn contract(msg: impl Into<String>) -> Self {
        Error::Contract(msg.into())
    }

    pub(crate) fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(what: &'static str, path: impl Into<PathBuf>, msg: impl ToString) -> Self {
        Error::Parse {
            what,
            path: path.into(),
            msg: msg.to_string(),
        }
    }
}
