use thiserror::Error;

#[derive(Debug, Error)]
pub enum PolymerError {
    #[error(transparent)]
    Core(#[from] chaostail_core::Error),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("covariance is not positive semidefinite: eigenvalue {eigenvalue} (index {index})")]
    NotPsd { eigenvalue: f64, index: usize },
    #[error("work estimate {requested} path-steps exceeds the budget of {budget}")]
    BudgetExceeded { requested: u128, budget: u128 },
    #[error("degenerate input: {0}")]
    Degenerate(String),
}

pub type Result<T> = std::result::Result<T, PolymerError>;
