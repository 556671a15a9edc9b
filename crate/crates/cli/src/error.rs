use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = CliError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("config {path}: {message}")]
    Config { path: PathBuf, message: String },

    #[error("invalid `{key}`: {message}")]
    Invalid { key: String, message: String },

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("cannot serialize effective config: {0}")]
    Toml(#[from] toml::ser::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Core(#[from] cts_core::Error),
}

impl CliError {
    pub fn invalid(key: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Invalid {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 1 for bad input or configuration, 2 for failures while running.
    pub fn exit_code(&self) -> u8 {
        use cts_core::Error as E;
        match self {
            CliError::Config { .. } | CliError::Invalid { .. } => 1,
            CliError::Core(E::Invalid(_) | E::Schema { .. } | E::Shape(_)) => 1,
            _ => 2,
        }
    }
}
