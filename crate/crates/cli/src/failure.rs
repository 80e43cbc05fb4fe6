use std::fmt;

use selmi::ErrorClass;

/// A command failure with the exit status it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

pub const EXIT_CONFIG: u8 = 2;
pub const EXIT_DATA: u8 = 3;
pub const EXIT_NUMERIC: u8 = 4;

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_CONFIG,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            code: EXIT_DATA,
            message: message.into(),
        }
    }

    /// Wraps a library error, prefixing the context (method, stage).
    pub fn from_error(context: &str, err: selmi::Error) -> Self {
        let code = match err.class() {
            ErrorClass::Config => EXIT_CONFIG,
            ErrorClass::Data => EXIT_DATA,
            ErrorClass::Numeric => EXIT_NUMERIC,
        };
        Self {
            code,
            message: format!("{context}: {err}"),
        }
    }

    pub fn io(path: &std::path::Path, err: impl fmt::Display) -> Self {
        Self::config(format!("cannot write {}: {err}", path.display()))
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<selmi::Error> for Failure {
    fn from(err: selmi::Error) -> Self {
        Self::from_error("error", err)
    }
}
