use thiserror::Error;

#[derive(Debug, Error)]
pub enum GeoError {
    #[error("invalid grid {nx}x{ny}: both dimensions must be at least 8 and cell sizes positive")]
    Grid { nx: usize, ny: usize },
    #[error("invalid covariance: {0}")]
    Covariance(String),
    #[error("invalid channel parameters: {0}")]
    Channel(String),
    #[error("an ensemble needs at least 2 members, got {0}")]
    EnsembleSize(usize),
    #[error("normalization bounds must satisfy min <= max, got [{min}, {max}]")]
    Bounds { min: f64, max: f64 },
    #[error("dataset file: {0}")]
    Format(String),
    #[error("covariance factorization failed: {0}")]
    Factorization(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
