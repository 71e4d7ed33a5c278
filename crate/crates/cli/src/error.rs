use std::fmt;

use reliab_core::ErrorClass;

/// A failure with the context it occurred in and the exit status it maps to.
#[derive(Debug)]
pub struct CliError {
    pub class: ErrorClass,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        CliError { class: ErrorClass::Config, message: message.into() }
    }

    pub fn data(message: impl Into<String>) -> Self {
        CliError { class: ErrorClass::Data, message: message.into() }
    }

    /// Wraps a library error, prefixing the stage that raised it.
    pub fn from_core(context: &str, err: reliab_core::Error) -> Self {
        CliError { class: err.class(), message: format!("{context}: {err}") }
    }

    pub fn io(context: &str, err: std::io::Error) -> Self {
        CliError { class: ErrorClass::Io, message: format!("{context}: {err}") }
    }

    pub fn exit_code(&self) -> i32 {
        match self.class {
            ErrorClass::Config | ErrorClass::Io => 2,
            ErrorClass::Data => 3,
            ErrorClass::Numerical => 4,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for CliError {}

pub trait Context<T> {
    fn context(self, what: &str) -> Result<T, CliError>;
}

impl<T> Context<T> for reliab_core::Result<T> {
    fn context(self, what: &str) -> Result<T, CliError> {
        self.map_err(|e| CliError::from_core(what, e))
    }
}
