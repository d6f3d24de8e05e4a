use bathsmith_core::Error;
use std::fmt;

/// Failure of a subcommand, classified by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or an inconsistent configuration.
    Usage(String),
    /// An input file is missing, unreadable or invalid.
    Input(String),
    /// A computation failed.
    Numeric(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Input(_) => 3,
            CliError::Numeric(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) | CliError::Input(m) | CliError::Numeric(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let msg = e.to_string();
        match e {
            Error::Parse { .. } | Error::Validation { .. } | Error::Io { .. } => CliError::Input(msg),
            Error::Domain(_) | Error::Config(_) => CliError::Usage(msg),
            Error::Numeric(_) | Error::Fit { .. } => CliError::Numeric(msg),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
