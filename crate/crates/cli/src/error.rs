use std::fmt;

/// A failed command, classified by the exit code it maps to.
#[derive(Debug)]
pub enum CliError {
    /// Bad flags or arguments (exit 1).
    Usage(String),
    /// Unreadable, malformed or inconsistent input (exit 2).
    Data(anyhow::Error),
    /// Everything else (exit 3).
    Runtime(anyhow::Error),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Data(_) => 2,
            CliError::Runtime(_) => 3,
        }
    }

    pub fn data(e: impl Into<anyhow::Error>) -> Self {
        CliError::Data(e.into())
    }

    pub fn runtime(e: impl Into<anyhow::Error>) -> Self {
        CliError::Runtime(e.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Data(e) => write!(f, "data error: {e:#}"),
            CliError::Runtime(e) => write!(f, "runtime error: {e:#}"),
        }
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;

/// Attaches an exit class to fallible calls.
pub trait Classify<T> {
    fn data_ctx(self, what: impl fmt::Display) -> CliResult<T>;
    fn runtime_ctx(self, what: impl fmt::Display) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn data_ctx(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::Data(e.into().context(what.to_string())))
    }

    fn runtime_ctx(self, what: impl fmt::Display) -> CliResult<T> {
        self.map_err(|e| CliError::Runtime(e.into().context(what.to_string())))
    }
}
