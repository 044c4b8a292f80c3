use std::path::PathBuf;

use thiserror::Error;

/// Errors produced anywhere in the voxid pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("cannot read audio file {path}: {source}")]
    UnreadableAudio {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("unsupported WAV encoding in {path}: {detail}")]
    UnsupportedEncoding { path: PathBuf, detail: String },

    #[error("audio file {0} contains no samples")]
    EmptyAudio(PathBuf),

    #[error("cannot write audio file {path}: {source}")]
    AudioWrite {
        path: PathBuf,
        #[source]
        source: hound::Error,
    },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("signal too short: {0}")]
    SignalTooShort(String),

    #[error("dimension mismatch: expected {expected}, got {actual}")]
    DimensionMismatch { expected: usize, actual: usize },

    #[error("singular value decomposition failed: {0}")]
    Svd(String),

    #[error("wavelet decomposition is inconsistent: {0}")]
    InconsistentBands(String),

    #[error("training data is degenerate: {0}")]
    DegenerateData(String),

    #[error(
        "SVM solver did not converge after {iterations} iterations (KKT gap {gap:.3e}, tolerance {tolerance:.1e})"
    )]
    SvmNotConverged {
        iterations: usize,
        gap: f64,
        tolerance: f64,
    },

    #[error("malformed {what}: {detail}")]
    Format { what: &'static str, detail: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("{stage} stage failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidArgument(msg.into())
    }

    pub(crate) fn format(what: &'static str, detail: impl Into<String>) -> Self {
        Error::Format {
            what,
            detail: detail.into(),
        }
    }

    /// True for errors caused by bad user input or configuration rather than
    /// a runtime failure.
    pub fn is_usage(&self) -> bool {
        matches!(self, Error::InvalidArgument(_) | Error::Config(_))
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
