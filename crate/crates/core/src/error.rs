use thiserror::Error;

/// Errors shared by all pipeline stages.
#[derive(Debug, Error)]
pub enum Error {
    #[error("shape mismatch: expected {expected:?}, got {actual:?}")]
    ShapeMismatch {
        expected: (usize, usize),
        actual: (usize, usize),
    },

    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("value out of range for `{name}`: {value}")]
    OutOfRange { name: &'static str, value: f64 },

    #[error("empty input: {0}")]
    EmptyInput(&'static str),

    #[error("assignment contains no instances")]
    NoInstances,

    #[error("ground truth contains no instances")]
    EmptyGroundTruth,

    #[error("masks overlap; a flat label map cannot represent them")]
    OverlappingMasks,
}

impl Error {
    pub fn invalid_param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParam {
            name,
            reason: reason.into(),
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
