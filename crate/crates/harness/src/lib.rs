//! Experiment orchestration: configuration, run directories with manifests,
//! the pipeline stages, reports and model comparison.

mod compare;
mod config;
mod error;
mod manifest;
mod pipeline;
pub mod plot;

pub use compare::{compare_models, config_differences, Better, Comparison, ComparisonRow, COLUMNS};
pub use config::{AssimilationSection, DatasetSection, ExperimentConfig, FlowSection, MetricsSection, ParamMode};
pub use error::HarnessError;
pub use manifest::{sha256_file, Run, RunManifest, Seeds, Stage, StageOutput, StageRecord, StageStatus, MANIFEST_FILE};
pub use pipeline::{
    assimilation_records, load_classifier, load_dataset, load_model, noise_fields, read_summary, run_experiment,
    run_stage, AssimilationSummary, LatentParam, LatentStats, MetricsSummary, RunSummary, SimForward,
    ASSIMILATION_DIR, CLASSIFIER_DIR, DATASET_FILE, METRICS_DIR, MODEL_DIR, REPORT_FILE, SUMMARY_FILE, TRAINING_DIR,
};
