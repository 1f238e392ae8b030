use std::io;
use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("dimension error: expected {expected}, found {found}")]
    Dimension { expected: usize, found: usize },

    #[error("invalid argument: {0}")]
    Argument(String),

    #[error("domain error: {0}")]
    Domain(String),

    #[error("schema error: {0}")]
    Schema(String),

    #[error("fold construction error: {0}")]
    Construction(String),

    #[error("shape mismatch: expected {expected}, found {found}")]
    Shape { expected: usize, found: usize },

    #[error("non-finite value: {0}")]
    Numeric(String),

    #[error("invalid state: {0}")]
    State(String),

    #[error("training diverged at epoch {epoch}: loss is {loss}")]
    Divergence { epoch: usize, loss: f64 },

    #[error("descriptor {0:?} has no vector in the embedding table")]
    Unresolvable(String),

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("experiment failed for model {model} on fold {fold}: {source}")]
    Experiment {
        model: String,
        fold: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("experiment error: {0}")]
    Evaluation(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// True for errors caused by bad input data or files rather than by a
    /// failed computation.
    pub fn is_data_error(&self) -> bool {
        match self {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Dimension { .. }
            | Error::Schema(_)
            | Error::Construction(_)
            | Error::Unresolvable(_)
            | Error::Corrupt(_)
            | Error::Config(_)
            | Error::Argument(_) => true,
            Error::Experiment { source, .. } => source.is_data_error(),
            _ => false,
        }
    }
}
