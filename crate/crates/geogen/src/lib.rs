//! Synthetic geology: Gaussian log-permeability priors, three-facies channel
//! fields, continuous non-Gaussian fields, and the dataset file format.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod continuous;
pub mod dataset;
pub mod error;
pub mod field;
pub mod gaussian;

pub use channels::{channel_field, facies_logperm, ChannelField, ChannelParams, FACIES_PERM_MD};
pub use continuous::{continuous_field, ContinuousParams};
pub use dataset::{generate_dataset, Case, Dataset, DatasetHeader, DatasetParams};
pub use error::GeoError;
pub use field::{label_components, FieldKind, Grid, Normalization, Realization};
pub use gaussian::{build_prior_ensemble, gaussian_random_field, CovarianceModel, CovarianceSpec, GaussianFieldSampler};
