//! Command-line error taxonomy: everything is either the user's input
//! (exit code 2) or our runtime (exit code 1).

use thiserror::Error;

/// Errors surfaced by the command-line tool.
#[derive(Debug, Error)]
pub enum CliError {
    /// Bad flags, malformed files, or infeasible designs — exit code 2.
    #[error("{0}")]
    Usage(String),
    /// Failures after the inputs were accepted (I/O, thread pool) — exit
    /// code 1.
    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    /// Process exit code for this error class.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Convenience constructor for usage errors.
    pub fn usage(message: impl Into<String>) -> Self {
        CliError::Usage(message.into())
    }

    /// Convenience constructor for runtime errors.
    pub fn runtime(message: impl Into<String>) -> Self {
        CliError::Runtime(message.into())
    }
}

/// Library errors always describe a problem with the supplied design,
/// data, or parameters, so they map to usage errors.
impl From<splitq_core::Error> for CliError {
    fn from(err: splitq_core::Error) -> Self {
        CliError::Usage(err.to_string())
    }
}

pub type Result<T> = core::result::Result<T, CliError>;
