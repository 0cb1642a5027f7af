use thiserror::Error;

#[derive(Debug, Error)]
pub enum WorkbenchError {
    #[error("config: {0}")]
    Config(String),
    #[error("solver did not converge: {0}")]
    NonConvergence(String),
    #[error(transparent)]
    Core(#[from] smartleak_core::Error),
    #[error("input: {0}")]
    Input(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl WorkbenchError {
    /// Process exit status for this error.
    pub fn exit_code(&self) -> i32 {
        match self {
            WorkbenchError::Config(_) => 2,
            WorkbenchError::Core(smartleak_core::Error::InvalidModel(_)) => 2,
            WorkbenchError::NonConvergence(_) => 3,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, WorkbenchError>;
