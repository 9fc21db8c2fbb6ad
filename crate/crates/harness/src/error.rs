use std::path::PathBuf;

use resgen_esmda::EsmdaError;
use resgen_flowsim::FlowError;
use resgen_genmodels::GenError;
use resgen_geogen::GeoError;
use resgen_metrics::MetricsError;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{path}: {reason}")]
    Missing { path: PathBuf, reason: String },
    #[error("runs differ outside the model section: {}", .0.join(", "))]
    Mismatch(Vec<String>),
    #[error("stage {stage} failed")]
    Stage {
        stage: String,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Geo(#[from] GeoError),
    #[error(transparent)]
    Gen(#[from] GenError),
    #[error(transparent)]
    Flow(#[from] FlowError),
    #[error(transparent)]
    Esmda(#[from] EsmdaError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    /// True for failures of the numerics rather than of the inputs.
    pub fn is_numerical(&self) -> bool {
        match self {
            HarnessError::Stage { source, .. } => source.is_numerical(),
            HarnessError::Gen(GenError::NonFinite { .. }) => true,
            HarnessError::Gen(GenError::Metrics(e)) | HarnessError::Metrics(e) => {
                matches!(e, MetricsError::NonFinite(_) | MetricsError::Diverged(_))
            }
            HarnessError::Esmda(e) => esmda_numerical(e),
            HarnessError::Flow(e) => flow_numerical(e),
            _ => false,
        }
    }

    /// Process exit code: 2 for numerical failures, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.is_numerical() {
            2
        } else {
            1
        }
    }
}

fn esmda_numerical(e: &EsmdaError) -> bool {
    matches!(e, EsmdaError::NonFinite(_) | EsmdaError::Forward { .. })
}

fn flow_numerical(e: &FlowError) -> bool {
    match e {
        FlowError::Member { source, .. } => flow_numerical(source),
        FlowError::Singular | FlowError::NotPositiveDefinite(_) | FlowError::Transport(_) | FlowError::Cfl { .. } => {
            true
        }
        FlowError::BadPermeability(_) => true,
        FlowError::Config(_) | FlowError::FieldSize { .. } => false,
    }
}
