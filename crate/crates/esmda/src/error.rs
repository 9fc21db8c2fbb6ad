use thiserror::Error;

#[derive(Debug, Error)]
pub enum EsmdaError {
    #[error("ensemble needs at least two members, got {0}")]
    EnsembleSize(usize),
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    Dimension { what: &'static str, expected: usize, got: usize },
    #[error("observation error variance at index {0} is not positive")]
    SingularCovariance(usize),
    #[error("invalid inflation schedule: {0}")]
    Schedule(String),
    #[error("update produced a non-finite value for member {0}")]
    NonFinite(usize),
    #[error("forward model failed for member {member}: {message}")]
    Forward { member: usize, message: String },
    #[error("parameterization failed: {0}")]
    Parameterization(String),
    #[error("ensemble file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
