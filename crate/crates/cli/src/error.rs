//! CLI error record with distinct exit codes per failure class.

use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    /// Unreadable or invalid configuration / flags (exit 3).
    Config,
    /// Missing or malformed checkpoint (exit 4).
    Checkpoint,
    /// Numeric or training failure (exit 5).
    Runtime,
    /// Filesystem failure (exit 6).
    Io,
}

impl ErrorKind {
    pub fn exit_code(&self) -> i32 {
        match self {
            ErrorKind::Config => 3,
            ErrorKind::Checkpoint => 4,
            ErrorKind::Runtime => 5,
            ErrorKind::Io => 6,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ErrorKind::Config => "config",
            ErrorKind::Checkpoint => "checkpoint",
            ErrorKind::Runtime => "runtime",
            ErrorKind::Io => "io",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: ErrorKind,
    pub message: String,
}

impl CliError {
    pub fn new(kind: ErrorKind, message: String) -> Self {
        CliError { kind, message }
    }

    /// Machine-readable error record printed to stderr on failure.
    pub fn record(&self) -> String {
        format!(
            "{{\"error\":\"{}\",\"message\":{}}}",
            self.kind.name(),
            serde_json::to_string(&self.message).unwrap_or_else(|_| "\"\"".into())
        )
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.kind.name(), self.message)
    }
}

impl From<vaelab::Error> for CliError {
    fn from(e: vaelab::Error) -> Self {
        let kind = match &e {
            vaelab::Error::CheckpointFormat(_) => ErrorKind::Checkpoint,
            vaelab::Error::Io(_) => ErrorKind::Io,
            vaelab::Error::InvalidParameter(_) => ErrorKind::Config,
            _ => ErrorKind::Runtime,
        };
        CliError::new(kind, e.to_string())
    }
}
