use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("{0}")]
    Io(String),
    #[error("solver failure: {0}")]
    Solver(String),
    #[error("failed checks: {0}")]
    Check(String),
}

impl CliError {
    /// 0 ok, 1 failed check, 2 config or io error, 3 solver failure.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Check(_) => 1,
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Solver(_) => 3,
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e.to_string())
    }
}

impl From<dbar_core::Error> for CliError {
    fn from(e: dbar_core::Error) -> Self {
        match e {
            dbar_core::Error::Solver(m) => CliError::Solver(m),
            other => CliError::Config(other.to_string()),
        }
    }
}
