use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    /// A configuration value is missing, ill-typed or inconsistent.
    #[error("config error: {0}")]
    Config(String),

    /// A caller passed an out-of-range index or malformed argument.
    #[error("invalid argument: {0}")]
    Argument(String),

    /// An internal contract between pipeline stages was broken.
    #[error("contract violation: {0}")]
    Contract(String),

    #[error("instance too large for exhaustive search: {0}")]
    TooLarge(String),

    #[error("training diverged: {0}")]
    Diverged(String),

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-friendly tag, used by the CLI error line and the C ABI.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Config(_) => "config",
            Error::Argument(_) => "argument",
            Error::Contract(_) => "contract",
            Error::TooLarge(_) => "too_large",
            Error::Diverged(_) => "diverged",
            Error::Parse { .. } => "parse",
            Error::Io { .. } => "io",
        }
    }
}
