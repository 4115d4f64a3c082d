//! Exit-code policy: anything wrong with the configuration is a validation
//! error (exit 1, message names the key); failures after dispatch, such as
//! unreadable data files, are runtime errors (exit 2).

use std::fmt;

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Runtime(anyhow::Error),
}

pub type CliResult<T> = Result<T, CliError>;

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Runtime(_) => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Validation(message) => write!(f, "invalid configuration: {message}"),
            CliError::Runtime(error) => write!(f, "{error:#}"),
        }
    }
}

pub fn validation(message: impl fmt::Display) -> CliError {
    CliError::Validation(message.to_string())
}

pub fn runtime(error: impl Into<anyhow::Error>) -> CliError {
    CliError::Runtime(error.into())
}
