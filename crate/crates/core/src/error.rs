use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    #[error("schema error: missing columns [{}]", missing.join(", "))]
    Schema { missing: Vec<String> },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("contract violation: {0}")]
    Contract(String),

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("training diverged at epoch {epoch} (eta = {eta}): loss is not finite")]
    Divergence { epoch: usize, eta: f64 },

    #[error(
        "window calibration failed: no window up to {ws_max} yields zero false positives \
         (smallest violating rate {violating_rate:.4} at ws = {ws_max})"
    )]
    WindowSearch { ws_max: usize, violating_rate: f64 },

    #[error("version mismatch: expected {expected}, found {found}")]
    VersionMismatch { expected: String, found: String },

    #[error("corrupt file: {0}")]
    Corrupt(String),

    #[error("sink error: {0}")]
    Sink(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn parse(line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            line,
            message: message.into(),
        }
    }
}
