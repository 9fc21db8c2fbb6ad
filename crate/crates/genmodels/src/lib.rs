//! Generative parameterizations of reservoir fields: a DCGAN, a convolutional
//! VAE and a VAE-GAN, with their losses and training loops.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod config;
mod error;
pub mod losses;
mod model;
mod train;

pub use config::{Architecture, LossWeights, ModelConfig, ModelKind, ResolvedWeights, TrainConfig};
pub use error::GenError;
pub use model::{facies_decode, sample_latent, sample_prior, GenerativeModel, Posterior, Provenance};
pub use train::{mean_kl, reconstruction_mse, split_validation, train, EpochRecord, TrainingTrace};
