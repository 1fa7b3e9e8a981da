use std::path::PathBuf;

use thiserror::Error;

/// Errors raised across the discovery, material and simulation stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("field file format error (line {line}): {msg}")]
    Format { line: usize, msg: String },

    #[error("grid error: {msg} (worst offending index {index})")]
    Grid { msg: String, index: usize },

    #[error("window error: {0}")]
    Window(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("selection error: {0}")]
    Selection(String),

    #[error("degenerate data: {0}")]
    DegenerateData(String),

    #[error("sign error: {0}")]
    Sign(String),

    #[error("aggregation error: {0}")]
    Aggregation(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("assembly error: {0}")]
    Assembly(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn param(msg: impl Into<String>) -> Self {
        Error::Parameter(msg.into())
    }
}
