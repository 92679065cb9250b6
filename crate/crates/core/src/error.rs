use std::io;
use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("instance {instance}: {message}")]
    Validation { instance: String, message: String },

    #[error("rating {0} is outside 1..=5")]
    RatingDomain(i64),

    #[error("threshold {0} is outside 1..=4")]
    Threshold(i64),

    #[error("overlapping spans [{0},{1}] and [{2},{3}]")]
    OverlappingSpans(usize, usize, usize, usize),

    #[error("span [{start},{end}] has no role")]
    MissingRole { start: usize, end: usize },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("alignment error in sentence {sentence}: {message}")]
    Alignment { sentence: String, message: String },

    #[error("data error: {0}")]
    Data(String),

    #[error("transfer error: tensor {tensor}: {message}")]
    Transfer { tensor: String, message: String },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("training diverged at epoch {epoch}: non-finite {what}")]
    Divergence { epoch: usize, what: String },

    #[error("metric error: {0}")]
    Metric(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn config(msg: impl Into<String>) -> Self {
        Error::Config(msg.into())
    }

    pub fn shape(msg: impl Into<String>) -> Self {
        Error::Shape(msg.into())
    }

    /// Errors caused by user input or configuration rather than an internal fault.
    pub fn is_user_error(&self) -> bool {
        !matches!(self, Error::Divergence { .. })
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
