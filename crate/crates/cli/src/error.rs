use std::fmt;

use nkrr_core::Error;

pub const EXIT_CONFIG: u8 = 1;
pub const EXIT_IO: u8 = 2;
pub const EXIT_NUMERIC: u8 = 3;

/// A message and the process exit code it maps to.
#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self { code: EXIT_CONFIG, message: message.into() }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self { code: EXIT_IO, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Self { code: EXIT_NUMERIC, message: message.into() }
    }

    /// Library error raised while handling `path`, which is named in the message.
    pub fn at(path: &std::path::Path, e: Error) -> Self {
        let mut err = Self::from(e);
        err.message = format!("{}: {}", path.display(), err.message);
        err
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let code = match &e {
            Error::InvalidArgument(_) => EXIT_CONFIG,
            Error::Io(_) | Error::Format(_) | Error::Protocol(_) => EXIT_IO,
            Error::DimensionMismatch { .. }
            | Error::Singular { .. }
            | Error::TuningDiverged(_)
            | Error::DegenerateVolume(_) => EXIT_NUMERIC,
        };
        Self { code, message: e.to_string() }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}
