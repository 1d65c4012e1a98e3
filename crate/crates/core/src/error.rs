use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("non-integral cycles: {0}")]
    NonIntegralCycles(String),

    #[error("invalid segment: {0}")]
    InvalidSegment(String),

    #[error("invalid dataset: {0}")]
    InvalidDataset(String),

    #[error("duplicate class name `{0}`")]
    DuplicateClassName(String),

    #[error("invalid appliance signature `{name}`: {reason}")]
    InvalidSignature { name: String, reason: String },

    #[error("format error: {0}")]
    Format(String),

    #[error("length mismatch: expected {expected}, found {found}")]
    LengthMismatch { expected: usize, found: usize },

    #[error("I/O error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("invalid thresholds: on {on} W must exceed off {off} W and off must be >= 0")]
    InvalidThresholds { on: f64, off: f64 },

    #[error("unknown appliance `{0}`")]
    UnknownAppliance(String),

    #[error("event at {event_time} s is out of range of the stream")]
    OutOfRange { event_time: f64 },

    #[error("degenerate signal: {0}")]
    DegenerateSignal(String),

    #[error("requested {dims} dimensions but segments have only {available} samples")]
    DimsTooLarge { dims: usize, available: usize },

    #[error("empty feature configuration")]
    EmptyConfig,

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("k = {k} exceeds the admissible maximum {max}")]
    KTooLarge { k: usize, max: usize },

    #[error("training data contains a single class")]
    SingleClass,

    #[error("training set is empty")]
    EmptyTrainSet,

    #[error("non-integral layer width: {0}")]
    NonIntegralWidth(String),

    #[error("invalid network configuration: {0}")]
    InvalidConfig(String),

    #[error("non-finite loss at epoch {epoch} (train loss {train_loss})")]
    NonFiniteLoss { epoch: usize, train_loss: f64 },

    #[error("class `{class}` has {count} samples, at least {required} required")]
    ClassTooSmall {
        class: String,
        count: usize,
        required: usize,
    },

    #[error("unknown preset `{0}`")]
    UnknownPreset(String),

    #[error("serialization error: {0}")]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}
