use thiserror::Error;

#[derive(Debug, Error)]
pub enum MetricsError {
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("observation error variance at index {0} is not positive")]
    SingularCovariance(usize),
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("no class present in the reference labels")]
    NoClasses,
    #[error("label {label} outside 0..{classes}")]
    Label { label: usize, classes: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("classifier training diverged at epoch {0}")]
    Diverged(usize),
    #[error(transparent)]
    Nn(#[from] resgen_nn::NnError),
    #[error(transparent)]
    Geo(#[from] resgen_geogen::GeoError),
}
