use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("validation failed: {}", .0.join("; "))]
    Validation(Vec<String>),

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("invalid state: {0}")]
    State(String),

    /// A policy backend failed or returned something unusable. `raw` keeps
    /// the offending payload for diagnosis.
    #[error("backend error: {message}")]
    Backend { message: String, raw: String },

    #[error("schema violation: {message}")]
    Schema { message: String, raw: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("input error: {0}")]
    Input(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("transport error: {0}")]
    Transport(#[from] std::io::Error),
}

impl Error {
    /// Short category label used by the command line front end.
    pub fn category(&self) -> &'static str {
        match self {
            Error::Parse { .. } => "parse",
            Error::Validation(_) => "validation",
            Error::Argument(_) => "argument",
            Error::State(_) => "state",
            Error::Backend { .. } => "backend",
            Error::Schema { .. } => "schema",
            Error::Config(_) => "config",
            Error::Input(_) => "input",
            Error::Io { .. } | Error::Transport(_) => "io",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
