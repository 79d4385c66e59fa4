use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{path}: {msg}")]
    Parse { path: PathBuf, msg: String },

    #[error("inconsistent channel lengths: {0}")]
    InconsistentChannelLengths(String),

    #[error("unsupported EDF variant: {0}")]
    UnsupportedEdf(String),

    #[error("missing electrode '{0}'")]
    MissingElectrode(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("invalid recording: {0}")]
    InvalidRecording(String),

    #[error("insufficient training data: {0}")]
    InsufficientData(String),

    #[error("both states required in training data")]
    BothStatesRequired,

    #[error("undefined J: {0}")]
    UndefinedJ(&'static str),

    #[error("probability {0} outside its allowed range")]
    Probability(f64),

    #[error("C-element arity mismatch: expected {expected} inputs, got {got}")]
    Arity { expected: usize, got: usize },

    #[error("stream length mismatch: {0}")]
    LengthMismatch(String),

    #[error("insufficient bits: need {needed}, stream has {available}")]
    InsufficientBits { needed: usize, available: usize },

    #[error("invalid combo: {0}")]
    Combo(String),

    #[error("internal invariant violated: {0}")]
    Internal(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn parse(path: impl Into<PathBuf>, msg: impl Into<String>) -> Self {
        Error::Parse {
            path: path.into(),
            msg: msg.into(),
        }
    }

    /// True for failures caused by too little (or single-class) training data,
    /// as opposed to malformed input or internal faults.
    pub fn is_insufficient_data(&self) -> bool {
        matches!(
            self,
            Error::InsufficientData(_) | Error::BothStatesRequired | Error::UndefinedJ(_)
        )
    }

    /// True for failures attributable to the caller's input (files, configs, arguments).
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Parse { .. }
                | Error::InconsistentChannelLengths(_)
                | Error::UnsupportedEdf(_)
                | Error::MissingElectrode(_)
                | Error::Config(_)
                | Error::InvalidRecording(_)
                | Error::Probability(_)
                | Error::Combo(_)
                | Error::Io(_)
                | Error::Json(_)
                | Error::Csv(_)
        )
    }
}
