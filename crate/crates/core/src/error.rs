use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("csv error: {0}")]
    Csv(String),

    #[error("invalid input: {0}")]
    Invalid(String),

    #[error("insufficient data: {0}")]
    Insufficient(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("schema violation at `{path}`: {message}")]
    Schema { path: String, message: String },

    #[error("generated series for spec {spec} diverged at step {step} (|value| > {limit:e})")]
    Diverged { spec: String, step: usize, limit: f64 },

    #[error("training diverged at epoch {epoch}: non-finite loss")]
    TrainingDiverged { epoch: usize },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn schema(path: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Schema {
            path: path.into(),
            message: message.into(),
        }
    }
}
