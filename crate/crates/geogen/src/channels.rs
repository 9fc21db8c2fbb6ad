//! Object-based three-facies channel fields.
//!
//! Sinuous channel belts are drawn at a realization-level orientation and
//! rasterized by stamping discs along the centreline, which keeps every belt
//! 4-connected. Each belt paints its levee (facies 1) into background cells
//! before its sand (facies 2).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::GeoError;
use crate::field::{FieldKind, Grid, Realization};

/// Permeability of facies 0 (background), 1 (levee) and 2 (channel sand), mD.
pub const FACIES_PERM_MD: [f64; 3] = [100.0, 1000.0, 9000.0];

pub fn facies_logperm(code: usize) -> f64 {
    FACIES_PERM_MD[code].ln()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChannelParams {
    /// Mean belt orientation, degrees counter-clockwise from the x axis.
    pub orientation_mean_deg: f64,
    /// Spread of the realization-level orientation.
    pub orientation_std_deg: f64,
    /// Extra per-belt deviation from the realization orientation.
    pub orientation_jitter_deg: f64,
    /// Sand width range, cells.
    pub width: [f64; 2],
    /// Levee margin on each side of the sand, cells.
    pub levee_width: f64,
    /// Sinuosity amplitude range, cells.
    pub amplitude: [f64; 2],
    /// Sinuosity wavelength range, cells.
    pub wavelength: [f64; 2],
    /// Target sand fraction range; each realization draws its own target.
    pub density: [f64; 2],
    pub max_channels: usize,
}

impl Default for ChannelParams {
    fn default() -> Self {
        Self {
            orientation_mean_deg: 45.0,
            orientation_std_deg: 15.0,
            orientation_jitter_deg: 4.0,
            width: [2.0, 3.5],
            levee_width: 1.0,
            amplitude: [0.5, 2.0],
            wavelength: [16.0, 32.0],
            density: [0.15, 0.35],
            max_channels: 40,
        }
    }
}

fn check_range(name: &str, r: [f64; 2], min: f64) -> Result<(), GeoError> {
    if !(r[0] >= min && r[1] >= r[0] && r[1].is_finite()) {
        return Err(GeoError::Channel(format!("{name} range {r:?} is invalid")));
    }
    Ok(())
}

impl ChannelParams {
    pub fn validate(&self) -> Result<(), GeoError> {
        if !(self.width[0] > 0.0) {
            return Err(GeoError::Channel("channel width must be positive".into()));
        }
        check_range("width", self.width, 0.0)?;
        check_range("amplitude", self.amplitude, 0.0)?;
        check_range("wavelength", self.wavelength, 1e-6)?;
        check_range("density", self.density, 0.0)?;
        if self.density[1] >= 1.0 {
            return Err(GeoError::Channel("density must stay below 1".into()));
        }
        if !(self.levee_width >= 0.0) || !(self.orientation_std_deg >= 0.0) || !(self.orientation_jitter_deg >= 0.0) {
            return Err(GeoError::Channel("levee width and orientation spreads must be >= 0".into()));
        }
        Ok(())
    }

    /// Class label from the realization's orientation tercile and density tercile.
    pub fn label(&self, orientation_deg: f64, target: f64) -> usize {
        // ±0.4307σ splits a normal distribution into equal thirds.
        let cut = 0.4307 * self.orientation_std_deg;
        let o = if orientation_deg < self.orientation_mean_deg - cut {
            0
        } else if orientation_deg <= self.orientation_mean_deg + cut {
            1
        } else {
            2
        };
        let span = self.density[1] - self.density[0];
        let p = if span <= 0.0 {
            0
        } else {
            (((target - self.density[0]) / span * 3.0) as usize).min(2)
        };
        o * 3 + p
    }

    pub const NUM_CLASSES: usize = 9;
}

/// One rasterized belt.
#[derive(Clone, Debug)]
pub struct ChannelTrace {
    pub orientation_deg: f64,
    pub width: f64,
    /// Distinct cells crossed by the in-grid centreline, in order.
    pub centerline: Vec<usize>,
}

#[derive(Clone, Debug)]
pub struct ChannelField {
    /// Facies codes 0/1/2 stored as floats.
    pub facies: Realization,
    pub orientation_deg: f64,
    pub target_fraction: f64,
    pub channels: Vec<ChannelTrace>,
    pub label: usize,
}

impl ChannelField {
    /// Log-permeability field from the facies table.
    pub fn logperm(&self) -> Realization {
        Realization {
            grid: self.facies.grid,
            values: self.facies.values.iter().map(|&c| facies_logperm(c as usize)).collect(),
            kind: FieldKind::ContinuousLogperm,
        }
    }
}

fn uniform(rng: &mut ChaCha8Rng, r: [f64; 2]) -> f64 {
    if r[1] > r[0] {
        rng.random_range(r[0]..r[1])
    } else {
        r[0]
    }
}

fn stamp(codes: &mut [u8], grid: &Grid, x: f64, y: f64, radius: f64, code: u8, only_on: Option<u8>) {
    let r2 = radius * radius;
    let i0 = (x - radius - 0.5).floor().max(0.0) as usize;
    let j0 = (y - radius - 0.5).floor().max(0.0) as usize;
    let i1 = ((x + radius).ceil() as usize).min(grid.nx - 1);
    let j1 = ((y + radius).ceil() as usize).min(grid.ny - 1);
    for j in j0..=j1 {
        for i in i0..=i1 {
            let (dx, dy) = (i as f64 + 0.5 - x, j as f64 + 0.5 - y);
            if dx * dx + dy * dy <= r2 {
                let c = &mut codes[grid.index(i, j)];
                if only_on.is_none_or(|o| *c == o) {
                    *c = code;
                }
            }
        }
    }
}

const STEP: f64 = 0.25;

/// Generates one channel realization.
pub fn channel_field(grid: Grid, params: &ChannelParams, seed: u64) -> Result<ChannelField, GeoError> {
    grid.validate()?;
    params.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let orient_dist = Normal::new(params.orientation_mean_deg, params.orientation_std_deg)
        .map_err(|e| GeoError::Channel(e.to_string()))?;
    let orientation_deg = orient_dist.sample(&mut rng);
    let target = uniform(&mut rng, params.density);
    let label = params.label(orientation_deg, target);
    let n = grid.cells();
    let mut codes = vec![0u8; n];
    let mut channels = Vec::new();
    let sand = |c: &[u8]| c.iter().filter(|&&v| v == 2).count() as f64 / n as f64;
    let (cx, cy) = (grid.nx as f64 / 2.0, grid.ny as f64 / 2.0);
    let diag = ((grid.nx * grid.nx + grid.ny * grid.ny) as f64).sqrt();
    while target > 0.0 && channels.len() < params.max_channels {
        let before = sand(&codes);
        if before >= target {
            break;
        }
        let jitter = if params.orientation_jitter_deg > 0.0 {
            Normal::new(0.0, params.orientation_jitter_deg)
                .map_err(|e| GeoError::Channel(e.to_string()))?
                .sample(&mut rng)
        } else {
            0.0
        };
        let theta = (orientation_deg + jitter).to_radians();
        let (ux, uy) = (theta.cos(), theta.sin());
        let (nx_, ny_) = (-uy, ux);
        let offset = rng.random_range(-0.5..0.5) * diag;
        let width = uniform(&mut rng, params.width);
        let amp = uniform(&mut rng, params.amplitude);
        let wavelength = uniform(&mut rng, params.wavelength);
        let phase = rng.random_range(0.0..std::f64::consts::TAU);
        let steps = (2.0 * diag / STEP) as usize;
        let mut segments: Vec<Vec<(f64, f64)>> = vec![Vec::new()];
        for s in 0..=steps {
            let t = -diag + s as f64 * STEP;
            let wiggle = amp * (std::f64::consts::TAU * t / wavelength + phase).sin();
            let x = cx + t * ux + (offset + wiggle) * nx_;
            let y = cy + t * uy + (offset + wiggle) * ny_;
            if x >= 0.0 && y >= 0.0 && x < grid.nx as f64 && y < grid.ny as f64 {
                segments.last_mut().expect("non-empty").push((x, y));
            } else if !segments.last().expect("non-empty").is_empty() {
                segments.push(Vec::new());
            }
        }
        let path = segments.into_iter().max_by_key(|s| s.len()).unwrap_or_default();
        if path.is_empty() {
            continue;
        }
        let saved = codes.clone();
        let sand_r = (width / 2.0).max(1.0);
        for &(x, y) in &path {
            stamp(&mut codes, &grid, x, y, sand_r + params.levee_width, 1, Some(0));
        }
        for &(x, y) in &path {
            stamp(&mut codes, &grid, x, y, sand_r, 2, None);
        }
        let after = sand(&codes);
        if after > target && (after - target) > (target - before) {
            codes = saved;
            break;
        }
        let mut centerline: Vec<usize> = Vec::new();
        for &(x, y) in &path {
            let c = grid.index(x as usize, y as usize);
            if centerline.last() != Some(&c) && !centerline.contains(&c) {
                centerline.push(c);
            }
        }
        channels.push(ChannelTrace {
            orientation_deg: orientation_deg + jitter,
            width,
            centerline,
        });
    }
    Ok(ChannelField {
        facies: Realization {
            grid,
            values: codes.into_iter().map(f64::from).collect(),
            kind: FieldKind::CategoricalFacies,
        },
        orientation_deg,
        target_fraction: target,
        channels,
        label,
    })
}
