//! Process exit codes and the error type that carries them.

use std::fmt;
use std::path::Path;

use pmtc::error::PmtcError;

pub const EXIT_RUNTIME: u8 = 1;
pub const EXIT_INVALID_CONFIG: u8 = 2;
pub const EXIT_INFEASIBLE: u8 = 3;
pub const EXIT_SHAPE: u8 = 4;
pub const EXIT_UNREADABLE: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn new(code: u8, message: impl Into<String>) -> Self {
        Self { code, message: message.into() }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(EXIT_INVALID_CONFIG, message)
    }

    /// Error raised while reading `path`: anything but a shape problem means
    /// the file could not be used.
    pub fn reading(path: &Path, err: PmtcError) -> Self {
        let code = match err {
            PmtcError::ShapeMismatch(_) => EXIT_SHAPE,
            _ => EXIT_UNREADABLE,
        };
        Self::new(code, format!("{}: {err}", path.display()))
    }

    pub fn writing(path: &Path, err: impl fmt::Display) -> Self {
        Self::new(EXIT_RUNTIME, format!("cannot write {}: {err}", path.display()))
    }
}

impl From<PmtcError> for Failure {
    fn from(err: PmtcError) -> Self {
        let code = match err {
            PmtcError::InvalidArgument(_) | PmtcError::UnknownMethod(_) => EXIT_INVALID_CONFIG,
            PmtcError::InfeasibleDesign(_) => EXIT_INFEASIBLE,
            PmtcError::ShapeMismatch(_) | PmtcError::RankTooLarge { .. } | PmtcError::ModeOutOfRange { .. } => EXIT_SHAPE,
            PmtcError::Format(_) | PmtcError::Csv(_) => EXIT_UNREADABLE,
            _ => EXIT_RUNTIME,
        };
        Self::new(code, err.to_string())
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

pub type CliResult<T> = Result<T, Failure>;
