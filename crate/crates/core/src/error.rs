use thiserror::Error;

/// Errors surfaced by the simulator and control stack.
#[derive(Debug, Error)]
pub enum Error {
    #[error("config error in `{field}`: {msg}")]
    Config { field: String, msg: String },

    #[error("terrain envelope violated: {0}")]
    Envelope(String),

    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("empty split: {0}")]
    EmptySplit(String),

    #[error("ill-conditioned design matrix: {0}")]
    IllConditioned(String),

    #[error("io error at {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
}

impl Error {
    pub fn config(field: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Config {
            field: field.into(),
            msg: msg.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
