use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("vertex budget exceeded: needed more than {budget} vertices ({what})")]
    Budget { budget: usize, what: String },
    #[error("value {value} outside tabulated range (limit {limit})")]
    OutOfRange { value: f64, limit: f64 },
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("edge ({0}, {1}) carries no kernel weight")]
    LabelMismatch(usize, usize),
    #[error("graph is disconnected ({components} components)")]
    Disconnected { components: usize },
    #[error("no convergence after {iterations} iterations (residual {residual:e})")]
    Convergence { iterations: usize, residual: f64 },
    #[error("resolution failure: {0}")]
    Resolution(String),
    #[error("invariant violated: {0}")]
    Invariant(String),
    #[error("enumeration exceeded {limit} shapes")]
    CombinatorialExplosion { limit: usize },
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn invalid<T>(msg: impl Into<String>) -> Result<T> {
    Err(Error::InvalidInput(msg.into()))
}
