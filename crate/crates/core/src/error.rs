use std::path::PathBuf;

use thiserror::Error;

/// Every failure the library can report.
///
/// `kind()` returns a stable machine-readable tag; the CLI emits it in its
/// JSON error reports, so the strings must not change.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("singular geometry: {0}")]
    SingularGeometry(String),

    #[error("sequence mismatch: {0}")]
    SequenceMismatch(String),

    #[error("training diverged at step {step}: {reason}")]
    TrainingFailure { step: usize, reason: String },

    #[error("corpus not found: {}", .0.display())]
    CorpusNotFound(PathBuf),

    #[error("corrupt checkpoint: {0}")]
    CorruptCheckpoint(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed file {}: {reason}", path.display())]
    Format { path: PathBuf, reason: String },

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("image error: {0}")]
    Image(String),
}

impl Error {
    pub fn kind(&self) -> &'static str {
        match self {
            Error::InvalidInput(_) => "invalid-input",
            Error::SingularGeometry(_) => "singular-geometry",
            Error::SequenceMismatch(_) => "sequence-mismatch",
            Error::TrainingFailure { .. } => "training-failure",
            Error::CorpusNotFound(_) => "corpus-not-found",
            Error::CorruptCheckpoint(_) => "corrupt-checkpoint",
            Error::Config(_) => "config",
            Error::Format { .. } => "format",
            Error::Io { .. } => "io",
            Error::Image(_) => "image",
        }
    }

    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidInput(msg.into())
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(path: impl Into<PathBuf>, reason: impl Into<String>) -> Self {
        Error::Format {
            path: path.into(),
            reason: reason.into(),
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
