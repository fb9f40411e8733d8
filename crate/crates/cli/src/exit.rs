use std::fmt;

use sinmt::Error;

pub const CONFIG: u8 = 2;
pub const IO: u8 = 3;
pub const NUMERIC: u8 = 4;

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError {
            code: CONFIG,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        CliError {
            code: IO,
            message: message.into(),
        }
    }

    /// Any failure while loading an input becomes a usage error.
    pub fn load(err: Error) -> Self {
        CliError::config(err.to_string())
    }
}

impl From<Error> for CliError {
    fn from(err: Error) -> Self {
        let code = match err {
            Error::Io { .. } => IO,
            Error::Diverged(_) => NUMERIC,
            _ => CONFIG,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
