use std::path::PathBuf;

use thiserror::Error;

/// Process exit codes.
pub mod exit {
    pub const OK: i32 = 0;
    pub const USAGE: i32 = 1;
    pub const MALFORMED_INPUT: i32 = 2;
    pub const IO: i32 = 3;
    pub const UNKNOWN_PRESET: i32 = 4;
    pub const NUMERIC: i32 = 5;
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid value for `{field}`: {message}")]
    Usage { field: String, message: String },

    #[error("malformed input at line {line}: {message}")]
    Line { line: usize, message: String },

    #[error("malformed input: {0}")]
    Input(String),

    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("unknown preset `{0}` (expected table1, table2, conditional or qq)")]
    UnknownPreset(String),

    #[error("numeric failure: {0}")]
    Numeric(String),
}

impl CliError {
    pub fn usage(field: &str, message: impl Into<String>) -> Self {
        CliError::Usage {
            field: field.to_string(),
            message: message.into(),
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => exit::USAGE,
            CliError::Line { .. } | CliError::Input(_) => exit::MALFORMED_INPUT,
            CliError::Io { .. } => exit::IO,
            CliError::UnknownPreset(_) => exit::UNKNOWN_PRESET,
            CliError::Numeric(_) => exit::NUMERIC,
        }
    }
}

impl From<quantstream::Error> for CliError {
    fn from(e: quantstream::Error) -> Self {
        use quantstream::Error as E;
        match e {
            E::Config { field, message } => CliError::Usage { field, message },
            E::Domain(m) => CliError::usage("argument", m),
            E::Input {
                index: Some(i),
                message,
            } => CliError::Input(format!("item {i}: {message}")),
            E::Input { index: None, message } => CliError::Input(message),
            E::Numeric(m) => CliError::Numeric(m),
        }
    }
}

pub type CliResult<T> = Result<T, CliError>;
