use nalgebra::{DMatrix, SymmetricEigen};
use resgen_geogen::label_components;
use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

pub const HISTOGRAM_BINS: usize = 50;
pub const PCA_COMPONENTS: usize = 20;
const HISTOGRAM_SMOOTHING: f64 = 1e-6;

/// A set of equally sized fields on an `nx × ny` grid, cell `(i, j)` at `j * nx + i`.
#[derive(Clone, Copy, Debug)]
pub struct FieldSet<'a> {
    pub fields: &'a [Vec<f64>],
    pub nx: usize,
    pub ny: usize,
}

impl<'a> FieldSet<'a> {
    pub fn new(fields: &'a [Vec<f64>], nx: usize, ny: usize) -> Result<Self, MetricsError> {
        if fields.is_empty() {
            return Err(MetricsError::Empty("field set"));
        }
        for f in fields {
            crate::ensemble::check_len(nx * ny, f.len())?;
        }
        Ok(Self { fields, nx, ny })
    }

    fn same_grid(&self, other: &FieldSet) -> Result<(), MetricsError> {
        if self.nx != other.nx || self.ny != other.ny {
            return Err(MetricsError::Length { expected: self.nx * self.ny, got: other.nx * other.ny });
        }
        Ok(())
    }

    pub fn default_lags(&self) -> usize {
        (self.nx.min(self.ny) / 2).max(1)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeoStatsReport {
    pub variogram_mse: f64,
    pub connectivity_mse: f64,
    pub histogram_kl: f64,
    pub pca_correlation: f64,
    pub mds_mmd: f64,
}

/// Semivariogram of one field, averaged over the x and y directions, for lags 1..=L.
pub fn semivariogram(field: &[f64], nx: usize, ny: usize, lags: usize) -> Vec<f64> {
    (1..=lags)
        .map(|h| {
            let (mut sum, mut count) = (0.0, 0usize);
            for j in 0..ny {
                for i in 0..nx {
                    let v = field[j * nx + i];
                    if i + h < nx {
                        let d = field[j * nx + i + h] - v;
                        sum += d * d;
                        count += 1;
                    }
                    if j + h < ny {
                        let d = field[(j + h) * nx + i] - v;
                        sum += d * d;
                        count += 1;
                    }
                }
            }
            if count == 0 {
                0.0
            } else {
                0.5 * sum / count as f64
            }
        })
        .collect()
}

fn mean_curve(set: &FieldSet, curve: impl Fn(&[f64]) -> Vec<f64>) -> Vec<f64> {
    let mut acc: Vec<f64> = Vec::new();
    for f in set.fields {
        let c = curve(f);
        if acc.is_empty() {
            acc = vec![0.0; c.len()];
        }
        acc.iter_mut().zip(&c).for_each(|(a, b)| *a += b);
    }
    let n = set.fields.len() as f64;
    acc.into_iter().map(|v| v / n).collect()
}

fn mse(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() / a.len().max(1) as f64
}

/// MSE between the two sets' mean semivariograms.
pub fn variogram_mse(a: &FieldSet, b: &FieldSet, lags: usize) -> Result<f64, MetricsError> {
    a.same_grid(b)?;
    let ca = mean_curve(a, |f| semivariogram(f, a.nx, a.ny, lags));
    let cb = mean_curve(b, |f| semivariogram(f, b.nx, b.ny, lags));
    Ok(mse(&ca, &cb))
}

/// Probability that two cells `h` apart, both above `threshold`, lie in one
/// connected body, for lags 1..=L along x and y.
pub fn connectivity_curve(field: &[f64], nx: usize, ny: usize, threshold: f64, lags: usize) -> Vec<f64> {
    let mask: Vec<bool> = field.iter().map(|v| *v >= threshold).collect();
    let (labels, _) = label_components(&mask, nx, ny);
    (1..=lags)
        .map(|h| {
            let (mut same, mut both) = (0usize, 0usize);
            let mut visit = |a: usize, b: usize| {
                if mask[a] && mask[b] {
                    both += 1;
                    if labels[a] == labels[b] {
                        same += 1;
                    }
                }
            };
            for j in 0..ny {
                for i in 0..nx {
                    if i + h < nx {
                        visit(j * nx + i, j * nx + i + h);
                    }
                    if j + h < ny {
                        visit(j * nx + i, (j + h) * nx + i);
                    }
                }
            }
            if both == 0 {
                0.0
            } else {
                same as f64 / both as f64
            }
        })
        .collect()
}

pub fn connectivity_mse(a: &FieldSet, b: &FieldSet, threshold: f64, lags: usize) -> Result<f64, MetricsError> {
    a.same_grid(b)?;
    let ca = mean_curve(a, |f| connectivity_curve(f, a.nx, a.ny, threshold, lags));
    let cb = mean_curve(b, |f| connectivity_curve(f, b.nx, b.ny, threshold, lags));
    Ok(mse(&ca, &cb))
}

/// `KL(p ‖ q)` for discrete distributions; both are renormalized.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64, MetricsError> {
    crate::ensemble::check_len(p.len(), q.len())?;
    let (sp, sq): (f64, f64) = (p.iter().sum(), q.iter().sum());
    if !(sp > 0.0 && sq > 0.0) {
        return Err(MetricsError::Empty("histogram mass"));
    }
    let mut kl = 0.0;
    for (a, b) in p.iter().zip(q) {
        let (a, b) = (a / sp, b / sq);
        if a > 0.0 {
            if b <= 0.0 {
                return Ok(f64::INFINITY);
            }
            kl += a * (a / b).ln();
        }
    }
    Ok(kl.max(0.0))
}

fn value_range(set: &FieldSet) -> (f64, f64) {
    set.fields.iter().flatten().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)))
}

/// Histogram over `bins` equal bins on `[lo, hi]` plus an underflow and an
/// overflow bin, with additive smoothing.
pub fn histogram(set: &FieldSet, lo: f64, hi: f64, bins: usize) -> Vec<f64> {
    let mut h = vec![HISTOGRAM_SMOOTHING; bins + 2];
    let width = (hi - lo).max(f64::MIN_POSITIVE);
    for f in set.fields {
        for &v in f {
            let k = if v < lo {
                0
            } else if v > hi {
                bins + 1
            } else {
                1 + (((v - lo) / width) * bins as f64).floor().min((bins - 1) as f64) as usize
            };
            h[k] += 1.0;
        }
    }
    h
}

/// `KL(hist_A ‖ hist_B)`. The bins are fixed by the value range of the
/// reference set `a`; values of `b` outside it land in the overflow bins.
pub fn histogram_kl(a: &FieldSet, b: &FieldSet, bins: usize) -> Result<f64, MetricsError> {
    a.same_grid(b)?;
    let (lo, hi) = value_range(a);
    kl_divergence(&histogram(a, lo, hi, bins), &histogram(b, lo, hi, bins))
}

/// Fractions of variance explained by the leading principal components.
pub fn explained_variance(set: &FieldSet, k: usize) -> Vec<f64> {
    let n = set.fields.len();
    let m = set.nx * set.ny;
    let mut x = DMatrix::zeros(n, m);
    for (r, f) in set.fields.iter().enumerate() {
        x.row_mut(r).copy_from_slice(f);
    }
    let mean = x.row_mean();
    for mut row in x.row_iter_mut() {
        row -= &mean;
    }
    // The Gram matrix shares the non-zero spectrum of the covariance.
    let gram = &x * x.transpose();
    let mut vals: Vec<f64> = SymmetricEigen::new(gram).eigenvalues.iter().map(|v| v.max(0.0)).collect();
    vals.sort_by(|a, b| b.total_cmp(a));
    let total: f64 = vals.iter().sum();
    vals.truncate(k);
    if total > 0.0 {
        vals.iter_mut().for_each(|v| *v /= total);
    }
    vals
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len().min(b.len());
    if n < 2 {
        return 1.0;
    }
    let (a, b) = (&a[..n], &b[..n]);
    let ma = a.iter().sum::<f64>() / n as f64;
    let mb = b.iter().sum::<f64>() / n as f64;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return if saa == sbb { 1.0 } else { 0.0 };
    }
    (sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0)
}

/// Correlation of the two sets' explained-variance spectra over the top `k`.
pub fn pca_correlation(a: &FieldSet, b: &FieldSet, k: usize) -> Result<f64, MetricsError> {
    a.same_grid(b)?;
    Ok(pearson(&explained_variance(a, k), &explained_variance(b, k)))
}

/// Classical MDS of the pooled realizations into `dims` coordinates.
pub fn classical_mds(fields: &[&[f64]], dims: usize) -> Vec<Vec<f64>> {
    let n = fields.len();
    let mut d2 = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in i + 1..n {
            let s: f64 = fields[i].iter().zip(fields[j]).map(|(a, b)| (a - b) * (a - b)).sum();
            d2[(i, j)] = s;
            d2[(j, i)] = s;
        }
    }
    let row_mean: Vec<f64> = (0..n).map(|i| d2.row(i).sum() / n as f64).collect();
    let all = row_mean.iter().sum::<f64>() / n as f64;
    let b = DMatrix::from_fn(n, n, |i, j| -0.5 * (d2[(i, j)] - row_mean[i] - row_mean[j] + all));
    let eig = SymmetricEigen::new(b);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&x, &y| eig.eigenvalues[y].total_cmp(&eig.eigenvalues[x]).then(x.cmp(&y)));
    let mut coords = vec![vec![0.0; dims]; n];
    for (d, &k) in order.iter().take(dims).enumerate() {
        let scale = eig.eigenvalues[k].max(0.0).sqrt();
        // Fix the eigenvector sign so the embedding is reproducible.
        let col = eig.eigenvectors.column(k);
        let sign = if col.iter().fold(0.0, |s, v| s + v) < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            coords[i][d] = sign * col[i] * scale;
        }
    }
    coords
}

/// Squared MMD (biased estimate) with an RBF kernel whose bandwidth is the
/// median pairwise distance of the pooled points.
pub fn mmd_rbf(x: &[Vec<f64>], y: &[Vec<f64>]) -> f64 {
    let pooled: Vec<&Vec<f64>> = x.iter().chain(y).collect();
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(u, v)| (u - v) * (u - v)).sum::<f64>();
    let mut d: Vec<f64> = Vec::new();
    for i in 0..pooled.len() {
        for j in i + 1..pooled.len() {
            d.push(dist2(pooled[i], pooled[j]).sqrt());
        }
    }
    d.sort_by(|a, b| a.total_cmp(b));
    let median = d.get(d.len() / 2).copied().unwrap_or(1.0);
    let bw = if median > 0.0 { median } else { 1.0 };
    let k = |a: &[f64], b: &[f64]| (-dist2(a, b) / (2.0 * bw * bw)).exp();
    let mean_k = |p: &[Vec<f64>], q: &[Vec<f64>]| {
        let mut s = 0.0;
        for a in p {
            for b in q {
                s += k(a, b);
            }
        }
        s / (p.len() * q.len()) as f64
    };
    (mean_k(x, x) + mean_k(y, y) - 2.0 * mean_k(x, y)).max(0.0)
}

/// MMD between the sets after a joint two-dimensional classical MDS.
pub fn mds_mmd(a: &FieldSet, b: &FieldSet) -> Result<f64, MetricsError> {
    a.same_grid(b)?;
    let pooled: Vec<&[f64]> = a.fields.iter().chain(b.fields).map(|f| f.as_slice()).collect();
    let coords = classical_mds(&pooled, 2);
    let (ca, cb) = coords.split_at(a.fields.len());
    Ok(mmd_rbf(ca, cb))
}

/// Full comparison with the default lags, bins and component count.
/// `threshold` selects the connected bodies (e.g. the sand level).
pub fn geostats_report(a: &FieldSet, b: &FieldSet, threshold: f64) -> Result<GeoStatsReport, MetricsError> {
    let lags = a.default_lags();
    Ok(GeoStatsReport {
        variogram_mse: variogram_mse(a, b, lags)?,
        connectivity_mse: connectivity_mse(a, b, threshold, lags)?,
        histogram_kl: histogram_kl(a, b, HISTOGRAM_BINS)?,
        pca_correlation: pca_correlation(a, b, PCA_COMPONENTS)?,
        mds_mmd: mds_mmd(a, b)?,
    })
}
