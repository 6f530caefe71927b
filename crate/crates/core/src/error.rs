//! Error types shared across the simulator.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum SimError {
    #[error("config error: `{key}`: {message}")]
    Config { key: String, message: String },
    #[error("invalid parameter: {0}")]
    Param(String),
    #[error("protocol violation: {0}")]
    Protocol(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl SimError {
    pub fn config(key: impl Into<String>, message: impl Into<String>) -> Self {
        SimError::Config {
            key: key.into(),
            message: message.into(),
        }
    }

    pub fn param(message: impl Into<String>) -> Self {
        SimError::Param(message.into())
    }

    /// Process exit code for the CLI: 2 for configuration errors, 3 otherwise.
    pub fn exit_code(&self) -> u8 {
        match self {
            SimError::Config { .. } => 2,
            _ => 3,
        }
    }
}
