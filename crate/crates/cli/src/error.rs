use std::fmt;

use inflow_core::Error;

/// Failure of a subcommand, split by exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration, arguments or input files: exit code 2.
    Usage(String),
    /// Everything else: exit code 1.
    Runtime(Error),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }

    /// Errors raised while reading user-supplied inputs are the user's to fix.
    pub fn input(e: Error) -> Self {
        match e {
            Error::Diverged { .. } | Error::NonFinite(_) => CliError::Runtime(e),
            e => CliError::Usage(e.to_string()),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Runtime(e) => write!(f, "{e}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(msg) => CliError::Usage(format!("invalid configuration: {msg}")),
            e => CliError::Runtime(e),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

pub fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}
