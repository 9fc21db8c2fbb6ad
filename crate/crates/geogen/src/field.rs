use serde::{Deserialize, Serialize};

use crate::error::GeoError;

/// Rectangular simulation grid. Values are stored row-major with `j` (y) as
/// the slow index: cell `(i, j)` lives at `j * nx + i`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Grid {
    pub nx: usize,
    pub ny: usize,
    /// Cell size in metres.
    #[serde(default = "default_cell")]
    pub dx: f64,
    #[serde(default = "default_cell")]
    pub dy: f64,
}

fn default_cell() -> f64 {
    40.0
}

impl Grid {
    pub fn square(n: usize) -> Self {
        Self {
            nx: n,
            ny: n,
            dx: default_cell(),
            dy: default_cell(),
        }
    }

    pub fn validate(&self) -> Result<(), GeoError> {
        if self.nx < 8 || self.ny < 8 || !(self.dx > 0.0) || !(self.dy > 0.0) {
            return Err(GeoError::Grid {
                nx: self.nx,
                ny: self.ny,
            });
        }
        Ok(())
    }

    pub fn cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn index(&self, i: usize, j: usize) -> usize {
        j * self.nx + i
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FieldKind {
    /// Facies codes 0, 1, 2.
    CategoricalFacies,
    /// Natural log of permeability in mD.
    ContinuousLogperm,
    /// Affinely mapped to [−1, 1].
    Normalized,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Realization {
    pub grid: Grid,
    pub values: Vec<f64>,
    pub kind: FieldKind,
}

/// Affine map between `[min, max]` and `[−1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Normalization {
    pub min: f64,
    pub max: f64,
}

impl Normalization {
    pub fn new(min: f64, max: f64) -> Result<Self, GeoError> {
        if !(min <= max) || !min.is_finite() || !max.is_finite() {
            return Err(GeoError::Bounds { min, max });
        }
        Ok(Self { min, max })
    }

    /// Bounds spanning the values of `fields`.
    pub fn fit<'a>(fields: impl IntoIterator<Item = &'a [f64]>) -> Result<Self, GeoError> {
        let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
        for f in fields {
            for &v in f {
                lo = lo.min(v);
                hi = hi.max(v);
            }
        }
        Self::new(lo, hi)
    }

    /// A degenerate range maps everything to 0.
    pub fn forward(&self, v: f64) -> f64 {
        if self.max == self.min {
            0.0
        } else {
            2.0 * (v - self.min) / (self.max - self.min) - 1.0
        }
    }

    pub fn inverse(&self, u: f64) -> f64 {
        self.min + (u + 1.0) * 0.5 * (self.max - self.min)
    }

    pub fn normalize(&self, r: &Realization) -> Realization {
        Realization {
            grid: r.grid,
            values: r.values.iter().map(|&v| self.forward(v)).collect(),
            kind: FieldKind::Normalized,
        }
    }

    pub fn denormalize(&self, r: &Realization) -> Realization {
        Realization {
            grid: r.grid,
            values: r.values.iter().map(|&v| self.inverse(v)).collect(),
            kind: FieldKind::ContinuousLogperm,
        }
    }
}

/// 4-neighbour connected-component labelling of `mask` on an `nx × ny` grid.
/// Returns per-cell labels (`usize::MAX` outside the mask) and component sizes.
pub fn label_components(mask: &[bool], nx: usize, ny: usize) -> (Vec<usize>, Vec<usize>) {
    let mut labels = vec![usize::MAX; mask.len()];
    let mut sizes = Vec::new();
    let mut stack = Vec::new();
    for start in 0..mask.len() {
        if !mask[start] || labels[start] != usize::MAX {
            continue;
        }
        let id = sizes.len();
        let mut size = 0;
        labels[start] = id;
        stack.push(start);
        while let Some(c) = stack.pop() {
            size += 1;
            let (i, j) = (c % nx, c / nx);
            let mut visit = |n: usize| {
                if mask[n] && labels[n] == usize::MAX {
                    labels[n] = id;
                    stack.push(n);
                }
            };
            if i > 0 {
                visit(c - 1);
            }
            if i + 1 < nx {
                visit(c + 1);
            }
            if j > 0 {
                visit(c - nx);
            }
            if j + 1 < ny {
                visit(c + nx);
            }
        }
        sizes.push(size);
    }
    (labels, sizes)
}
