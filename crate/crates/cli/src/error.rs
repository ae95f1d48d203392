use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    /// A report was produced but some check missed its tolerance.
    #[error("{0}")]
    Tolerance(String),
    #[error("refused: {0}")]
    Resource(String),
    #[error(transparent)]
    Core(uinv_core::Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<uinv_core::Error> for CliError {
    fn from(e: uinv_core::Error) -> Self {
        match e {
            uinv_core::Error::SizeCap { .. } => CliError::Resource(e.to_string()),
            uinv_core::Error::InvalidArgument(m) => CliError::Usage(m),
            other => CliError::Core(other),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Tolerance(_) | CliError::Core(_) | CliError::Io(_) => 2,
            CliError::Resource(_) => 3,
        }
    }
}
