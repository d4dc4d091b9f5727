use std::fmt;
use std::path::Path;

/// Failure kinds mapped onto the exit-code contract:
/// 0 success, 1 runtime or I/O failure, 2 usage or config error.
#[derive(Debug)]
pub enum CliError {
    Config(String),
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, err: impl fmt::Display) -> Self {
        Self::Runtime(format!("{}: {err}", path.display()))
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            Self::Config(_) => 2,
            Self::Runtime(_) => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Config(msg) => write!(f, "config error: {msg}"),
            Self::Runtime(msg) => write!(f, "error: {msg}"),
        }
    }
}

impl From<coderate::Error> for CliError {
    fn from(err: coderate::Error) -> Self {
        Self::Runtime(err.to_string())
    }
}
