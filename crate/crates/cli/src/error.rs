use std::fmt;

use nocollapse_core::Error;

/// Exit code for bad input, missing files, or invalid configuration.
pub const EXIT_USAGE: i32 = 2;
/// Exit code for failures while computing (divergence, numerical errors).
pub const EXIT_RUNTIME: i32 = 1;

/// A command failure carrying its process exit code.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    pub fn runtime(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_RUNTIME,
            message: message.into(),
        }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for Failure {}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Io { .. }
            | Error::Parse { .. }
            | Error::EmptyDataset(_)
            | Error::InvalidArgument(_)
            | Error::Checkpoint(_)
            | Error::Json(_) => EXIT_USAGE,
            Error::NotPositiveDefinite { .. } | Error::UndefinedMetric(_) | Error::TooLarge { .. } | Error::Diverged { .. } => {
                EXIT_RUNTIME
            }
        };
        Self {
            code,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = std::result::Result<T, Failure>;

pub(crate) fn io_failure(path: &std::path::Path, e: std::io::Error) -> Failure {
    Failure::usage(format!("{}: {e}", path.display()))
}
