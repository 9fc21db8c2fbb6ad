//! Non-Gaussian continuous log-permeability fields: a skewed transform of a
//! Gaussian field with thin high-permeability streaks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::GeoError;
use crate::field::{FieldKind, Grid, Realization};
use crate::gaussian::{CovarianceModel, CovarianceSpec, GaussianFieldSampler};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ContinuousParams {
    /// Correlation range of the underlying standard Gaussian field, cells.
    pub range: f64,
    /// Log-permeability at the median of the Gaussian field.
    pub base: f64,
    pub scale: f64,
    /// Quadratic skew coefficient applied to the Gaussian field.
    pub skew: f64,
    pub streaks: [usize; 2],
    pub streak_amplitude: f64,
    pub streak_width: f64,
    pub clip: [f64; 2],
}

impl Default for ContinuousParams {
    fn default() -> Self {
        Self {
            range: 6.0,
            base: 4.5,
            scale: 1.1,
            skew: 0.25,
            streaks: [0, 3],
            streak_amplitude: 2.0,
            streak_width: 1.0,
            clip: [0.5, 9.5],
        }
    }
}

impl ContinuousParams {
    pub fn validate(&self) -> Result<(), GeoError> {
        let ok = self.range > 0.0
            && self.scale > 0.0
            && self.streak_width > 0.0
            && self.streaks[0] <= self.streaks[1]
            && self.clip[0] < self.clip[1];
        if !ok {
            return Err(GeoError::Covariance(format!("invalid continuous-field parameters {self:?}")));
        }
        Ok(())
    }

    pub fn sampler(&self, grid: Grid) -> Result<GaussianFieldSampler, GeoError> {
        self.validate()?;
        GaussianFieldSampler::new(
            grid,
            CovarianceSpec {
                model: CovarianceModel::Exponential,
                mean: 0.0,
                std: 1.0,
                range: self.range,
            },
        )
    }
}

/// One continuous field drawn with `sampler` (from [`ContinuousParams::sampler`]).
/// Returns the field and the number of streaks, which serves as its class label.
pub fn continuous_field(sampler: &GaussianFieldSampler, params: &ContinuousParams, seed: u64) -> (Realization, usize) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = sampler.grid();
    let g = sampler.sample(&mut rng);
    let mut values: Vec<f64> = g
        .values
        .iter()
        .map(|&z| params.base + params.scale * (z + params.skew * (z * z - 1.0)))
        .collect();
    let count = rng.random_range(params.streaks[0]..=params.streaks[1]);
    for _ in 0..count {
        let theta = rng.random_range(0.0..std::f64::consts::PI);
        let (px, py) = (rng.random_range(0.0..grid.nx as f64), rng.random_range(0.0..grid.ny as f64));
        let (nx, ny) = (-theta.sin(), theta.cos());
        for j in 0..grid.ny {
            for i in 0..grid.nx {
                let d = (i as f64 + 0.5 - px) * nx + (j as f64 + 0.5 - py) * ny;
                let w = (-(d / params.streak_width).powi(2)).exp();
                values[grid.index(i, j)] += params.streak_amplitude * w;
            }
        }
    }
    for v in &mut values {
        *v = v.clamp(params.clip[0], params.clip[1]);
    }
    let field = Realization {
        grid,
        values,
        kind: FieldKind::ContinuousLogperm,
    };
    (field, count)
}
