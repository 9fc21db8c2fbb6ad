use serde::{Deserialize, Serialize};

use crate::error::EsmdaError;

/// Constant inflation: `N_a` copies of `N_a`, so that `Σ 1/α_i = 1`.
pub fn inflation_schedule(n_a: usize) -> Vec<f64> {
    vec![n_a as f64; n_a]
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Localization {
    #[default]
    None,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdaConfig {
    /// Number of assimilations.
    #[serde(default = "default_na")]
    pub n_a: usize,
    /// Ensemble size.
    #[serde(default = "default_ne")]
    pub n_e: usize,
    /// Explicit inflation factors; the constant schedule when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub alphas: Option<Vec<f64>>,
    #[serde(default)]
    pub localization: Localization,
}

fn default_na() -> usize {
    4
}

fn default_ne() -> usize {
    100
}

impl Default for MdaConfig {
    fn default() -> Self {
        Self { n_a: default_na(), n_e: default_ne(), alphas: None, localization: Localization::None }
    }
}

impl MdaConfig {
    /// The inflation factors, checked for positivity and `Σ 1/α = 1`.
    pub fn alphas(&self) -> Result<Vec<f64>, EsmdaError> {
        let alphas = self.alphas.clone().unwrap_or_else(|| inflation_schedule(self.n_a));
        if alphas.len() != self.n_a {
            return Err(EsmdaError::Schedule(format!("{} factors for {} assimilations", alphas.len(), self.n_a)));
        }
        if alphas.is_empty() {
            return Ok(alphas);
        }
        if alphas.iter().any(|a| !(*a > 0.0 && a.is_finite())) {
            return Err(EsmdaError::Schedule("factors must be positive".into()));
        }
        let s: f64 = alphas.iter().map(|a| 1.0 / a).sum();
        if (s - 1.0).abs() > 1e-10 {
            return Err(EsmdaError::Schedule(format!("sum of inverse factors is {s}, not 1")));
        }
        Ok(alphas)
    }

    pub fn validate(&self) -> Result<(), EsmdaError> {
        if self.n_e < 2 {
            return Err(EsmdaError::EnsembleSize(self.n_e));
        }
        self.alphas().map(|_| ())
    }
}
