use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid rectangle: {0}")]
    InvalidRect(String),

    #[error("CTU index {index} out of range (grid has {len} CTUs)")]
    Index { index: usize, len: usize },

    #[error("degenerate detection with zero area: {0}")]
    DegenerateDetection(String),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("parse error in {context}: {message}")]
    Parse { context: String, message: String },

    #[error("unsupported schema version {found:?} (expected {expected:?})")]
    Version { found: String, expected: &'static str },

    #[error("integrity error: {0}")]
    Integrity(String),

    #[error("format error: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("external tool `{command}` failed ({status}): {stderr}")]
    ExternalTool {
        command: String,
        status: String,
        stderr: String,
    },

    #[error("protocol error: {0}")]
    Protocol(String),

    #[error("no overlapping quality range between curves ({lo} >= {hi})")]
    NoOverlap { lo: f64, hi: f64 },

    #[error("insufficient data: {0}")]
    InsufficientData(String),

    #[error("validation error: {0}")]
    Validation(String),

    #[error("average precision undefined: {0}")]
    UndefinedAp(String),

    #[error("configuration error: {0}")]
    Config(String),

    #[error("I/O error on {path}: {source}")]
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

    pub(crate) fn parse(context: impl Into<String>, message: impl ToString) -> Self {
        Error::Parse {
            context: context.into(),
            message: message.to_string(),
        }
    }

    /// True for failures caused by an external encoder/decoder process.
    pub fn is_external(&self) -> bool {
        matches!(self, Error::ExternalTool { .. } | Error::Protocol(_))
    }
}
