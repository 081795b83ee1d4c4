use thiserror::Error;

use chaostail_polymer::PolymerError;

/// Exit status contract: 0 pass, 1 configuration, 2 verification or
/// computation failure, 3 resource budget exceeded.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("computation failed: {0}")]
    Compute(String),
    #[error("budget exceeded: {0}")]
    Budget(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 1,
            CliError::Compute(_) => 2,
            CliError::Budget(_) => 3,
        }
    }
}

impl From<chaostail_core::Error> for CliError {
    fn from(e: chaostail_core::Error) -> Self {
        use chaostail_core::Error as E;
        match e {
            E::InvalidArgument(_) | E::DimensionMismatch { .. } | E::Json(_) => CliError::Config(e.to_string()),
            E::Io(io) => CliError::Io(io),
            other => CliError::Compute(other.to_string()),
        }
    }
}

impl From<PolymerError> for CliError {
    fn from(e: PolymerError) -> Self {
        match e {
            PolymerError::Core(inner) => inner.into(),
            PolymerError::InvalidArgument(_) | PolymerError::NotPsd { .. } => CliError::Config(e.to_string()),
            PolymerError::BudgetExceeded { .. } => CliError::Budget(e.to_string()),
            PolymerError::Degenerate(_) => CliError::Compute(e.to_string()),
        }
    }
}

impl From<serde_json::Error> for CliError {
    fn from(e: serde_json::Error) -> Self {
        CliError::Config(e.to_string())
    }
}
