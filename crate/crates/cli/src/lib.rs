//! Command-line front end: manifests, run directories, disk persistence,
//! remote provider adapters, and the four subcommands.

pub mod commands;
pub mod manifest;
pub mod remote;
pub mod run;
pub mod store;

use thiserror::Error;

/// Process-level failure classes; each maps to an exit code.
#[derive(Debug, Error)]
pub enum CliError {
    /// The inputs were readable but the content has problems worth reporting
    /// (dataset violations, evaluation mismatches). Exit code 1.
    #[error("{0}")]
    Findings(String),
    /// IO, parsing, or configuration trouble. Exit code 2.
    #[error("{0}")]
    Config(String),
    /// A provider failed in a way retries cannot fix. Exit code 3.
    #[error("{0}")]
    Provider(String),
}

impl CliError {
    pub fn findings(msg: impl Into<String>) -> Self {
        CliError::Findings(msg.into())
    }
    pub fn config(msg: impl Into<String>) -> Self {
        CliError::Config(msg.into())
    }
    pub fn provider(msg: impl Into<String>) -> Self {
        CliError::Provider(msg.into())
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Findings(_) => 1,
            CliError::Config(_) => 2,
            CliError::Provider(_) => 3,
        }
    }
}
