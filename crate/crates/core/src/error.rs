use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = ConvError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum ConvError {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("format error at byte {offset}: {message}")]
    Format { offset: u64, message: String },

    #[error("backend error: {0}")]
    Backend(String),

    #[error("numeric error in {context}: {message}")]
    Numeric { context: String, message: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("perturbation failed: {0}")]
    Perturbation(String),

    #[error("flow is not calibrated; run calibration on natural features first")]
    CalibrationMissing,

    #[error("round {round}: {source}")]
    Round {
        round: usize,
        #[source]
        source: Box<ConvError>,
    },

    #[error("{cell}: {source}")]
    Grid {
        cell: String,
        #[source]
        source: Box<ConvError>,
    },

    #[error("{path}: {source}")]
    File {
        path: PathBuf,
        #[source]
        source: Box<ConvError>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl ConvError {
    pub(crate) fn numeric(context: impl Into<String>, message: impl Into<String>) -> Self {
        ConvError::Numeric {
            context: context.into(),
            message: message.into(),
        }
    }

    pub(crate) fn format(offset: u64, message: impl Into<String>) -> Self {
        ConvError::Format {
            offset,
            message: message.into(),
        }
    }

    /// Attach a file path to an error raised while reading or writing it.
    pub fn in_file(self, path: impl Into<PathBuf>) -> Self {
        ConvError::File {
            path: path.into(),
            source: Box::new(self),
        }
    }

    /// True for failures that come from arithmetic rather than bad data.
    pub fn is_numeric(&self) -> bool {
        match self {
            ConvError::Numeric { .. } => true,
            ConvError::Round { source, .. }
            | ConvError::Grid { source, .. }
            | ConvError::File { source, .. } => source.is_numeric(),
            _ => false,
        }
    }
}
