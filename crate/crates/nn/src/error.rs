use thiserror::Error;

#[derive(Debug, Error)]
pub enum NnError {
    #[error("data of length {len} does not fit shape {shape:?}")]
    BadData { shape: Vec<usize>, len: usize },
    #[error("{op}: shape mismatch {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    #[error("layer {index} ({kind}): {source}")]
    Layer {
        index: usize,
        kind: String,
        #[source]
        source: Box<NnError>,
    },
    #[error("network expects per-sample input {expected:?}, got {got:?}")]
    InputShape {
        expected: Vec<usize>,
        got: Vec<usize>,
    },
    #[error("invalid layer spec: {0}")]
    InvalidSpec(String),
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(Vec<usize>),
    #[error("non-finite gradient in tensor '{0}'")]
    NonFiniteGradient(String),
    #[error("optimizer was given {got} gradients for {expected} parameters")]
    GradientCount { expected: usize, got: usize },
    #[error("weight file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
