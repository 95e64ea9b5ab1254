use std::fmt;
use std::io;
use std::path::Path;

use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Bad flags, unknown or invalid config keys, config mismatch.
    Config,
    /// Output could not be written or input could not be read.
    Io,
    /// A prerequisite stage or file is absent.
    Missing,
    /// A completed stage no longer matches its manifest.
    Integrity,
    /// Nothing to work on, e.g. an empty archive.
    Empty,
    /// Evolution, simulation or analysis failed.
    Run,
}

impl ErrorKind {
    pub fn name(self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Io => "io",
            ErrorKind::Missing => "missing",
            ErrorKind::Integrity => "integrity",
            ErrorKind::Empty => "empty",
            ErrorKind::Run => "run",
        }
    }

    pub fn exit_code(self) -> u8 {
        match self {
            ErrorKind::Config => 2,
            ErrorKind::Io => 3,
            ErrorKind::Missing => 4,
            ErrorKind::Integrity => 5,
            ErrorKind::Empty => 6,
            ErrorKind::Run => 7,
        }
    }
}

impl fmt::Display for ErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        CliError {
            kind,
            message: message.into(),
        }
    }

    /// I/O failure on `path`; absent files count as missing inputs.
    pub fn io(path: &Path, e: io::Error) -> Self {
        let kind = if e.kind() == io::ErrorKind::NotFound {
            ErrorKind::Missing
        } else {
            ErrorKind::Io
        };
        CliError::new(kind, format!("{}: {e}", path.display()))
    }

    /// One machine-parsable line: `error: kind=<kind> message=<quoted>`.
    pub fn line(&self) -> String {
        format!("error: kind={} message={:?}", self.kind, self.message)
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
