//! CLI error classes with stable machine-readable codes.
//!
//! Every failure is reported on stderr as one JSON object
//! `{"error": {"code": "...", "message": "..."}}` and mapped to a fixed
//! exit code per class.

use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },

    #[error("{path}: invalid {field}: {message}")]
    Format {
        path: PathBuf,
        field: &'static str,
        message: String,
    },

    #[error("{0}")]
    Data(String),
}

impl CliError {
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }

    pub fn data(msg: impl Into<String>) -> Self {
        CliError::Data(msg.into())
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn format(path: impl Into<PathBuf>, field: &'static str, message: impl Into<String>) -> Self {
        CliError::Format {
            path: path.into(),
            field,
            message: message.into(),
        }
    }

    /// Stable error class identifier.
    pub fn code(&self) -> &'static str {
        match self {
            CliError::Config(_) => "config",
            CliError::Io { .. } => "io",
            CliError::Format { .. } => "format",
            CliError::Data(_) => "data",
        }
    }

    /// Fixed exit code per class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::Format { .. } => 4,
            CliError::Data(_) => 5,
        }
    }

    /// The machine-readable stderr line.
    pub fn to_json(&self) -> String {
        serde_json::json!({
            "error": { "code": self.code(), "message": self.to_string() }
        })
        .to_string()
    }
}

impl From<probseg_core::Error> for CliError {
    fn from(e: probseg_core::Error) -> Self {
        CliError::Data(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
