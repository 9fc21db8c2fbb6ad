//! Stationary Gaussian random fields with exponential covariance.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::GeoError;
use crate::field::{FieldKind, Grid, Realization};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CovarianceModel {
    #[default]
    Exponential,
}

/// `C(h) = std² · exp(−h / range)` with `h` and `range` in cells.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CovarianceSpec {
    #[serde(default)]
    pub model: CovarianceModel,
    pub mean: f64,
    pub std: f64,
    pub range: f64,
}

impl CovarianceSpec {
    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.std >= 0.0) || !self.std.is_finite() {
            return Err(GeoError::Covariance(format!("std {} must be finite and >= 0", self.std)));
        }
        if !(self.range > 0.0) || !self.range.is_finite() {
            return Err(GeoError::Covariance(format!("range {} must be positive", self.range)));
        }
        if !self.mean.is_finite() {
            return Err(GeoError::Covariance("mean must be finite".into()));
        }
        Ok(())
    }

    pub fn covariance(&self, lag: f64) -> f64 {
        self.std * self.std * (-lag / self.range).exp()
    }
}

/// Largest grid for which the dense Cholesky fallback is attempted.
const CHOLESKY_MAX_CELLS: usize = 4096;

enum Method {
    Constant,
    /// Square roots of the circulant eigenvalues, scaled, on an `mx × my` torus.
    Circulant { mx: usize, my: usize, sqrt_eig: Vec<f64> },
    Cholesky(DMatrix<f64>),
}

/// Precomputed sampler for one grid and covariance. Building it is the
/// expensive part; each draw is one FFT or one triangular product.
pub struct GaussianFieldSampler {
    grid: Grid,
    spec: CovarianceSpec,
    method: Method,
}

fn fft2(data: &mut [Complex64], mx: usize, my: usize, planner: &mut FftPlanner<f64>) {
    let row = planner.plan_fft_forward(mx);
    for r in data.chunks_exact_mut(mx) {
        row.process(r);
    }
    let col = planner.plan_fft_forward(my);
    let mut buf = vec![Complex64::default(); my];
    for i in 0..mx {
        for j in 0..my {
            buf[j] = data[j * mx + i];
        }
        col.process(&mut buf);
        for j in 0..my {
            data[j * mx + i] = buf[j];
        }
    }
}

impl GaussianFieldSampler {
    pub fn new(grid: Grid, spec: CovarianceSpec) -> Result<Self, GeoError> {
        grid.validate()?;
        spec.validate()?;
        if spec.std == 0.0 {
            return Ok(Self {
                grid,
                spec,
                method: Method::Constant,
            });
        }
        for factor in [2usize, 3, 4] {
            if let Some(m) = Self::circulant(grid, spec, factor) {
                return Ok(Self { grid, spec, method: m });
            }
        }
        Self::with_cholesky(grid, spec)
    }

    /// Forces the dense Cholesky path.
    pub fn with_cholesky(grid: Grid, spec: CovarianceSpec) -> Result<Self, GeoError> {
        grid.validate()?;
        spec.validate()?;
        if grid.cells() > CHOLESKY_MAX_CELLS {
            return Err(GeoError::Factorization(format!(
                "circulant embedding is indefinite and {} cells is too many for a dense factorization",
                grid.cells()
            )));
        }
        let n = grid.cells();
        let cov = DMatrix::from_fn(n, n, |a, b| {
            let (ia, ja) = ((a % grid.nx) as f64, (a / grid.nx) as f64);
            let (ib, jb) = ((b % grid.nx) as f64, (b / grid.nx) as f64);
            spec.covariance(((ia - ib).powi(2) + (ja - jb).powi(2)).sqrt())
        });
        let chol = cov
            .cholesky()
            .ok_or_else(|| GeoError::Factorization("covariance is not positive definite".into()))?;
        Ok(Self {
            grid,
            spec,
            method: Method::Cholesky(chol.l()),
        })
    }

    fn circulant(grid: Grid, spec: CovarianceSpec, factor: usize) -> Option<Method> {
        let (mx, my) = (factor * grid.nx, factor * grid.ny);
        let mut c: Vec<Complex64> = (0..mx * my)
            .map(|k| {
                let (i, j) = (k % mx, k / mx);
                let di = i.min(mx - i) as f64;
                let dj = j.min(my - j) as f64;
                Complex64::new(spec.covariance((di * di + dj * dj).sqrt()), 0.0)
            })
            .collect();
        let mut planner = FftPlanner::new();
        fft2(&mut c, mx, my, &mut planner);
        let max = c.iter().map(|v| v.re).fold(0.0, f64::max);
        let min = c.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
        if min < -1e-8 * max {
            return None;
        }
        let scale = 1.0 / (mx * my) as f64;
        let sqrt_eig = c.iter().map(|v| (v.re.max(0.0) * scale).sqrt()).collect();
        Some(Method::Circulant { mx, my, sqrt_eig })
    }

    pub fn grid(&self) -> Grid {
        self.grid
    }

    /// True when the circulant-embedding path is in use.
    pub fn uses_fft(&self) -> bool {
        matches!(self.method, Method::Circulant { .. })
    }

    pub fn sample(&self, rng: &mut ChaCha8Rng) -> Realization {
        let n = self.grid.cells();
        let mean = self.spec.mean;
        let values = match &self.method {
            Method::Constant => vec![mean; n],
            Method::Circulant { mx, my, sqrt_eig } => {
                let mut z: Vec<Complex64> = sqrt_eig
                    .iter()
                    .map(|&s| {
                        let re: f64 = StandardNormal.sample(rng);
                        let im: f64 = StandardNormal.sample(rng);
                        Complex64::new(re * s, im * s)
                    })
                    .collect();
                fft2(&mut z, *mx, *my, &mut FftPlanner::new());
                let mut out = Vec::with_capacity(n);
                for j in 0..self.grid.ny {
                    for i in 0..self.grid.nx {
                        out.push(mean + z[j * mx + i].re);
                    }
                }
                out
            }
            Method::Cholesky(l) => {
                let e = nalgebra::DVector::from_fn(n, |_, _| StandardNormal.sample(rng));
                (l * e).iter().map(|v| mean + v).collect()
            }
        };
        Realization {
            grid: self.grid,
            values,
            kind: FieldKind::ContinuousLogperm,
        }
    }
}

/// Draw one field; the seed fully determines the result.
pub fn gaussian_random_field(grid: Grid, spec: CovarianceSpec, seed: u64) -> Result<Realization, GeoError> {
    let sampler = GaussianFieldSampler::new(grid, spec)?;
    Ok(sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed)))
}

/// `n_e` independent fields, member `k` drawn with seed `seed + k`.
pub fn build_prior_ensemble(
    grid: Grid,
    spec: CovarianceSpec,
    n_e: usize,
    seed: u64,
) -> Result<Vec<Realization>, GeoError> {
    if n_e < 2 {
        return Err(GeoError::EnsembleSize(n_e));
    }
    let sampler = GaussianFieldSampler::new(grid, spec)?;
    Ok((0..n_e as u64)
        .into_par_iter()
        .map(|k| sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed.wrapping_add(k))))
        .collect())
}
