//! Error type of the std layer, with the CLI exit-code mapping.

use anodiss_core::CoreError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// Invalid configuration, arguments, or input files.
    #[error("config error: {0}")]
    Config(String),
    /// Numerical failure (CFL violation, blow-up, tolerance breach).
    #[error("numeric failure: {0}")]
    Numeric(String),
    /// Geometry of the pipe construction is infeasible.
    #[error("geometry failure: {0}")]
    Geometry(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code: 2 config (including unreadable inputs),
    /// 3 numeric, 4 geometry.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Io(_) => 2,
            Error::Numeric(_) => 3,
            Error::Geometry(_) => 4,
        }
    }
}

impl From<CoreError> for Error {
    fn from(e: CoreError) -> Self {
        match e {
            CoreError::Geometry(_) => Error::Geometry(e.to_string()),
            CoreError::Numeric(_) => Error::Numeric(e.to_string()),
            _ => Error::Config(e.to_string()),
        }
    }
}

impl From<csv::Error> for Error {
    fn from(e: csv::Error) -> Self {
        Error::Config(format!("csv: {e}"))
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Config(format!("json: {e}"))
    }
}
