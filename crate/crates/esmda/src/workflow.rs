use serde::{Deserialize, Serialize};

use crate::analysis::analysis_step;
use crate::error::EsmdaError;
use crate::schedule::MdaConfig;

/// Maps the updated vectors to the fields the forward model consumes.
pub trait Parameterization {
    /// Length of the vectors being updated.
    fn dim(&self) -> usize;
    fn decode(&self, members: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EsmdaError>;
}

/// The forward operator `g`: one prediction vector per model field.
pub trait ForwardModel {
    fn forward(&self, models: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EsmdaError>;
}

/// Updates the model fields directly.
#[derive(Clone, Copy, Debug)]
pub struct Identity {
    pub dim: usize,
}

impl Parameterization for Identity {
    fn dim(&self) -> usize {
        self.dim
    }

    fn decode(&self, members: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EsmdaError> {
        Ok(members.to_vec())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Space {
    Latent,
    Model,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ensemble {
    pub members: Vec<Vec<f64>>,
    pub space: Space,
    pub iteration: usize,
}

impl Ensemble {
    pub fn new(members: Vec<Vec<f64>>, space: Space, iteration: usize) -> Result<Self, EsmdaError> {
        if members.len() < 2 {
            return Err(EsmdaError::EnsembleSize(members.len()));
        }
        let dim = members[0].len();
        if let Some(m) = members.iter().find(|m| m.len() != dim) {
            return Err(EsmdaError::Dimension { what: "ensemble member", expected: dim, got: m.len() });
        }
        Ok(Self { members, space, iteration })
    }

    pub fn len(&self) -> usize {
        self.members.len()
    }

    pub fn is_empty(&self) -> bool {
        self.members.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.members[0].len()
    }
}

/// State of the ensemble before assimilation `iteration` (or after the last).
#[derive(Clone, Debug)]
pub struct Snapshot {
    pub iteration: usize,
    pub params: Ensemble,
    pub models: Vec<Vec<f64>>,
    pub predictions: Vec<Vec<f64>>,
}

#[derive(Clone, Debug)]
pub struct Assimilation {
    /// `N_a + 1` snapshots: the prior and the state after each update.
    pub snapshots: Vec<Snapshot>,
}

impl Assimilation {
    pub fn prior(&self) -> &Snapshot {
        &self.snapshots[0]
    }

    pub fn posterior(&self) -> &Snapshot {
        self.snapshots.last().expect("at least the prior snapshot")
    }
}

/// Runs ESMDA on the parameterization's vectors: decode, forward, update,
/// `N_a` times, then decodes and forwards the final ensemble.
pub fn run_latent_assimilation(
    param: &dyn Parameterization,
    prior: Ensemble,
    forward: &dyn ForwardModel,
    d_obs: &[f64],
    cd_diag: &[f64],
    config: &MdaConfig,
    seed: u64,
) -> Result<Assimilation, EsmdaError> {
    let alphas = config.alphas()?;
    if prior.dim() != param.dim() {
        return Err(EsmdaError::Dimension { what: "prior ensemble", expected: param.dim(), got: prior.dim() });
    }
    let space = prior.space;
    let mut current = prior.members;
    let mut snapshots = Vec::with_capacity(alphas.len() + 1);
    for i in 0..=alphas.len() {
        let models = param.decode(&current)?;
        let predictions = forward.forward(&models)?;
        if predictions.len() != models.len() {
            return Err(EsmdaError::Dimension { what: "forward output", expected: models.len(), got: predictions.len() });
        }
        let next = match alphas.get(i) {
            Some(&alpha) => Some(analysis_step(
                &current,
                &predictions,
                d_obs,
                cd_diag,
                alpha,
                seed.wrapping_add(i as u64),
            )?),
            None => None,
        };
        snapshots.push(Snapshot {
            iteration: i,
            params: Ensemble { members: current, space, iteration: i },
            models,
            predictions,
        });
        match next {
            Some(n) => current = n,
            None => break,
        }
    }
    Ok(Assimilation { snapshots })
}
