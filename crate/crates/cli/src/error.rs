use std::fmt;

use hbcombine::Error;

#[derive(Debug)]
pub enum CliError {
    Lib(Error),
    /// Invalid flags or inputs detected by the CLI itself.
    Usage(String),
    /// An output failed a consistency check.
    Internal(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Lib(
                Error::InitializationFailure(_)
                | Error::SamplerDiverged(_)
                | Error::NonFiniteDensity(_)
                | Error::InsufficientDraws(_),
            ) => 3,
            CliError::Lib(_) | CliError::Usage(_) => 2,
            CliError::Internal(_) => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Lib(e) => write!(f, "{e}"),
            CliError::Usage(m) => f.write_str(m),
            CliError::Internal(m) => write!(f, "internal error: {m}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(Error::from(e))
    }
}

pub type CliResult<T> = Result<T, CliError>;
