//! Harness-level errors and their process exit codes.

use ept_core::EptError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    /// The invocation itself is wrong: bad config key or value, missing
    /// required input, conflicting output directory.
    #[error("configuration error: {0}")]
    Config(String),
    /// A verification subcommand ran to completion and found a failure.
    #[error("check failed: {0}")]
    CheckFailed(String),
    #[error(transparent)]
    Core(#[from] EptError),
}

pub type CliResult<T> = std::result::Result<T, CliError>;

/// Map an error to the documented exit codes: 2 for configuration
/// problems, 3 for data problems, 4 for divergence. Completed-but-failed
/// checks use the conventional 1.
pub fn exit_code(err: &CliError) -> i32 {
    match err {
        CliError::Config(_) => 2,
        CliError::CheckFailed(_) => 1,
        CliError::Core(core) => match core {
            EptError::Divergence { .. } => 4,
            EptError::Data(_) | EptError::MalformedFile { .. } | EptError::Io(_) => 3,
            _ => 2,
        },
    }
}

pub fn config_err(msg: impl Into<String>) -> CliError {
    CliError::Config(msg.into())
}
