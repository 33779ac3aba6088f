use std::fmt;

use mortar_core::MortarError;

/// Failure classes with distinct exit codes.
#[derive(Debug)]
pub enum CliError {
    /// Bad configuration or unreadable input: exit code 2.
    Config(String),
    /// Solver or output failure: exit code 3.
    Solver(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Solver(_) => 3,
        }
    }

    /// Errors while building inputs count as configuration errors.
    pub fn setup(e: MortarError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Config(m) => write!(f, "configuration error: {m}"),
            CliError::Solver(m) => write!(f, "solver error: {m}"),
        }
    }
}

impl std::error::Error for CliError {}

impl From<MortarError> for CliError {
    fn from(e: MortarError) -> Self {
        CliError::Solver(e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Solver(format!("io: {e}"))
    }
}
