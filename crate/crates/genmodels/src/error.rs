use resgen_metrics::MetricsError;
use resgen_nn::NnError;

#[derive(Debug, thiserror::Error)]
pub enum GenError {
    #[error("model has no encoder")]
    NoEncoder,
    #[error("latent dimension mismatch: expected {expected}, got {got}")]
    LatentDim { expected: usize, got: usize },
    #[error("field size mismatch: expected {expected} cells, got {got}")]
    FieldSize { expected: usize, got: usize },
    #[error("invalid model configuration: {0}")]
    Config(String),
    #[error("non-finite {component} at epoch {epoch}")]
    NonFinite { epoch: usize, component: String },
    #[error("bad model bundle: {0}")]
    Bundle(String),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}
