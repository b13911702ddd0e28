//! Monte-Carlo harness around the hetnet solver: scenario files, paired
//! multi-algorithm sweeps over an SNR grid, and plot-ready CSV output.

pub mod config;
pub mod experiment;
pub mod stats;

/// Harness-level errors, mapped onto process exit codes by the CLI.
#[derive(Debug, thiserror::Error)]
pub enum SimError {
    #[error("config error: {0}")]
    Config(String),

    #[error("numerical failure: {0}")]
    Numerical(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<hetnet_core::error::CoreError> for SimError {
    fn from(e: hetnet_core::error::CoreError) -> Self {
        match e {
            hetnet_core::error::CoreError::InvalidConfig(m) => SimError::Config(m),
            other => SimError::Numerical(other.to_string()),
        }
    }
}

impl SimError {
    /// 2 for usage/config problems, 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            SimError::Config(_) => 2,
            _ => 1,
        }
    }
}
