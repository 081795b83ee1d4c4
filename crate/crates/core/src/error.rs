use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("integrand is singular or non-finite at {at}")]
    Singular { at: f64 },
    #[error("x = {z} is the jump point of the Stein solution; use a one-sided derivative")]
    JumpPoint { z: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("degenerate input: {0}")]
    Degenerate(String),
    #[error("tail integral does not converge: {0}")]
    NonIntegrable(String),
    #[error("{z} lies outside the support of the density")]
    OutsideSupport { z: f64 },
    #[error("random variable is not centered (constant coefficient {0})")]
    NotCentered(f64),
    #[error("random variable is not in a single chaos of order {0}")]
    NotHomogeneous(usize),
    #[error("cannot certify a bound on |DX|: {0}")]
    Uncertifiable(String),
    #[error("integer overflow in Hermite linearization")]
    Overflow,
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
