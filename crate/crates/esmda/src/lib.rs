//! Ensemble smoother with multiple data assimilation (ES-MDA).
//!
//! Observation errors are assumed independent, so `C_D` is passed as its
//! diagonal of variances throughout.

mod analysis;
mod error;
mod io;
mod schedule;
mod workflow;

pub use analysis::{
    analysis_step, analysis_step_with_obs, ensemble_covariances, perturb_observations, to_matrix, CovPair,
    EIGEN_FLOOR,
};
pub use error::EsmdaError;
pub use io::{read_ensemble, write_ensemble};
pub use schedule::{inflation_schedule, Localization, MdaConfig};
pub use workflow::{
    run_latent_assimilation, Assimilation, Ensemble, ForwardModel, Identity, Parameterization, Snapshot, Space,
};
