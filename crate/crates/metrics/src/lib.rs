//! Quality metrics for assimilation runs and generated realizations.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod classifier;
mod ensemble;
mod error;
mod frechet;
mod geostats;

pub use classifier::{train_reservoir_classifier, ClassifierConfig, ClassifierReport, FeatureModel};
pub use ensemble::{
    balanced_accuracy, data_mismatch, ensemble_mean, ensemble_std, mean_data_mismatch, nearest_level,
    rmse_ensemble, spread, BalancedAccuracy, MetricRecord,
};
pub use error::MetricsError;
pub use frechet::{frechet_distance, frechet_from_moments, moments};
pub use geostats::{
    classical_mds, connectivity_curve, connectivity_mse, explained_variance, geostats_report, histogram,
    histogram_kl, kl_divergence, mds_mmd, mmd_rbf, pca_correlation, semivariogram, variogram_mse, FieldSet,
    GeoStatsReport, HISTOGRAM_BINS, PCA_COMPONENTS,
};
