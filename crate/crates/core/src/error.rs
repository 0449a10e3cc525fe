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

    #[error("malformed header: {0}")]
    MalformedHeader(String),

    #[error("sample count mismatch: header declares {expected} values, payload holds {found}")]
    SampleCountMismatch { expected: u64, found: u64 },

    #[error("unsupported format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u16, supported: u16 },

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("invalid manifest: {0}")]
    InvalidManifest(String),

    #[error("channel {0:?} not present in recording")]
    MissingChannel(String),

    #[error("signal of {signal_len} samples is shorter than the required {required}")]
    SignalTooShort { signal_len: usize, required: usize },

    #[error("annotation [{onset_s:.3} s, +{duration_s:.3} s] exceeds recording length {recording_s:.3} s")]
    AnnotationOutOfRange {
        onset_s: f64,
        duration_s: f64,
        recording_s: f64,
    },

    #[error("mel filter {row} is empty; reduce n_mels or widen the frequency range")]
    EmptyMelFilter { row: usize },

    #[error("invalid plan request: {0}")]
    Plan(String),

    #[error("training data contains a single class")]
    SingleClass,

    #[error("loss became non-finite at training epoch {epoch}")]
    NonFiniteLoss { epoch: usize },

    #[error("input dimension mismatch: model expects {expected:?}, got {found:?}")]
    DimensionMismatch {
        expected: (usize, usize),
        found: (usize, usize),
    },

    #[error("model has not been trained")]
    Untrained,

    #[error("statistic undefined: {0}")]
    Undefined(String),

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("serialization error: {0}")]
    Serde(String),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Short machine-readable tag used in CLI error JSON.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::MalformedHeader(_) => "malformed_header",
            Error::SampleCountMismatch { .. } => "sample_count_mismatch",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::InvalidRecording(_) => "invalid_recording",
            Error::InvalidConfig(_) => "invalid_config",
            Error::InvalidManifest(_) => "invalid_manifest",
            Error::MissingChannel(_) => "missing_channel",
            Error::SignalTooShort { .. } => "signal_too_short",
            Error::AnnotationOutOfRange { .. } => "annotation_out_of_range",
            Error::EmptyMelFilter { .. } => "empty_mel_filter",
            Error::Plan(_) => "plan",
            Error::SingleClass => "single_class",
            Error::NonFiniteLoss { .. } => "non_finite_loss",
            Error::DimensionMismatch { .. } => "dimension_mismatch",
            Error::Untrained => "untrained",
            Error::Undefined(_) => "undefined",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::Serde(_) => "serde",
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}
