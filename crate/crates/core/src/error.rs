use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: line {line}: {message}")]
    Parse {
        path: String,
        line: u64,
        message: String,
    },

    #[error("validation error: {0}")]
    Validation(String),

    #[error("duplicate video_id `{0}` in manifest")]
    DuplicateId(String),

    #[error("span out of range: {0}")]
    OutOfRange(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("sampling error: {0}")]
    Sampling(String),

    #[error("cannot align {spans} spans to a sentence with {tokens} tokens")]
    TooManySpans { spans: usize, tokens: usize },

    #[error("numerical error: {0}")]
    Numerical(String),

    #[error("training diverged at epoch {epoch}, step {step}: loss is {loss}")]
    Diverged { epoch: usize, step: usize, loss: f64 },

    #[error("checkpoint error: {0}")]
    Checkpoint(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Process exit code: 1 for malformed or invalid input, 2 for runtime
    /// and model failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Parse { .. }
            | Error::Validation(_)
            | Error::DuplicateId(_)
            | Error::OutOfRange(_)
            | Error::Config(_)
            | Error::TooManySpans { .. }
            | Error::Json(_) => 1,
            Error::Sampling(_)
            | Error::Numerical(_)
            | Error::Diverged { .. }
            | Error::Checkpoint(_)
            | Error::Io { .. } => 2,
        }
    }
}
