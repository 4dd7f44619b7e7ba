use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum FairfedError {
    #[error("config error: {0}")]
    Config(String),
    #[error("{path}: {message}")]
    ConfigFile { path: PathBuf, message: String },
    #[error("{path}:{line}: {message}")]
    Trace {
        path: PathBuf,
        line: u64,
        message: String,
    },
    #[error("unknown preset `{0}` (expected one of: {1})")]
    UnknownPreset(String, String),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error on {path}: {source}")]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },
    #[error(transparent)]
    Core(#[from] fairfed_core::Error),
    #[error("{0}")]
    Summary(String),
}

impl FairfedError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Self::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit status for the CLI: 1 for configuration problems, 2 for
    /// runtime failures.
    pub fn exit_code(&self) -> u8 {
        match self {
            Self::Config(_)
            | Self::ConfigFile { .. }
            | Self::Trace { .. }
            | Self::UnknownPreset(..) => 1,
            Self::Core(fairfed_core::Error::InvalidParameter { .. }) => 1,
            _ => 2,
        }
    }
}

pub type Result<T> = std::result::Result<T, FairfedError>;
