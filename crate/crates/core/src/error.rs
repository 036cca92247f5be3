use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("insufficient correspondence: {found} pairs, at least {required} required")]
    InsufficientCorrespondence { found: usize, required: usize },

    #[error("degenerate geometry: {0}")]
    DegenerateGeometry(String),

    /// Malformed input file. `context` locates the problem (row/column, field path).
    #[error("parse error in {path}: {context}: {message}")]
    Parse {
        path: PathBuf,
        context: String,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("generation error: {0}")]
    Generation(String),

    #[error("empty class: {0}")]
    EmptyClass(String),

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn parse(
        path: impl Into<PathBuf>,
        context: impl Into<String>,
        message: impl Into<String>,
    ) -> Self {
        Error::Parse {
            path: path.into(),
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
