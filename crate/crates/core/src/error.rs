use std::path::PathBuf;

/// Error type shared across the crate.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// I/O failure, annotated with the path involved.
    #[error("i/o error at {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    /// Malformed or unsupported on-disk data.
    #[error("format error: {0}")]
    Format(String),

    /// Invalid configuration or arguments.
    #[error("config error: {0}")]
    Config(String),

    /// A computation produced a non-finite value.
    #[error("numerical fault: {0}")]
    Numerical(String),

    /// An operation was invoked without a dependency it requires.
    #[error("missing dependency: {0}")]
    MissingDependency(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
