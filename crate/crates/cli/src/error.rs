use std::fmt;

use dermclass_core::Error;

/// Failure classes, each with its own exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Class {
    BadArgument,
    DataError,
    NumericFailure,
}

impl Class {
    pub fn exit_code(self) -> i32 {
        match self {
            Class::BadArgument => 2,
            Class::DataError => 3,
            Class::NumericFailure => 4,
        }
    }
}

impl fmt::Display for Class {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Class::BadArgument => "bad-argument",
            Class::DataError => "data-error",
            Class::NumericFailure => "numeric-failure",
        })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub class: Class,
    pub message: String,
}

impl CliError {
    pub fn bad_argument(message: impl Into<String>) -> Self {
        Self {
            class: Class::BadArgument,
            message: message.into(),
        }
    }

    pub fn data(message: impl Into<String>) -> Self {
        Self {
            class: Class::DataError,
            message: message.into(),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        let class = match &e {
            Error::InvalidArgument(_) => Class::BadArgument,
            Error::Numeric(_) => Class::NumericFailure,
            Error::Shape(_)
            | Error::Data(_)
            | Error::Parse { .. }
            | Error::Format(_)
            | Error::Io(_) => Class::DataError,
        };
        Self {
            class,
            message: e.to_string(),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;

/// Attach a path to an I/O failure.
pub fn io_context(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |e| CliError::data(format!("{}: {e}", path.display()))
}
