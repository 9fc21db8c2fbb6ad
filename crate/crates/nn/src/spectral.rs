//! Spectral normalization by power iteration.

use crate::real::Real;
use crate::tensor::Tensor;

/// Below this estimate a weight is treated as zero and left unchanged.
pub const SIGMA_FLOOR: f64 = 1e-12;

fn normalize(v: &mut [f64]) {
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
}

/// Runs `iters` power iterations on the row-major `rows × cols` matrix `w`,
/// updating the left vector `u` in place. Returns the right vector `v` and the
/// estimate `σ = uᵀ W v`.
pub fn power_iteration(w: &[f64], rows: usize, cols: usize, u: &mut Vec<f64>, iters: usize) -> (Vec<f64>, f64) {
    if u.len() != rows || u.iter().all(|&x| x == 0.0) {
        *u = vec![1.0; rows];
    }
    normalize(u);
    let mut v = vec![0.0; cols];
    for _ in 0..iters.max(1) {
        v.iter_mut().for_each(|x| *x = 0.0);
        for r in 0..rows {
            let ur = u[r];
            for (vc, &wrc) in v.iter_mut().zip(&w[r * cols..(r + 1) * cols]) {
                *vc += wrc * ur;
            }
        }
        normalize(&mut v);
        for (r, ur) in u.iter_mut().enumerate() {
            *ur = w[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum();
        }
        normalize(u);
    }
    let sigma = (0..rows)
        .map(|r| u[r] * w[r * cols..(r + 1) * cols].iter().zip(&v).map(|(a, b)| a * b).sum::<f64>())
        .sum();
    (v, sigma)
}

/// Divides `weight` (viewed as `shape[0] × rest`) by its estimated top singular
/// value. `u` persists between calls so one iteration per call suffices once
/// it has converged. A (near-)zero matrix is returned unchanged.
pub fn spectral_normalize<T: Real>(weight: &Tensor<T>, iters: usize, u: &mut Vec<f64>) -> Tensor<T> {
    let rows = weight.shape().first().copied().unwrap_or(1);
    let cols = weight.len() / rows.max(1);
    let (_, sigma) = power_iteration(&weight.to_f64_vec(), rows, cols, u, iters);
    if sigma.abs() < SIGMA_FLOOR {
        return weight.clone();
    }
    weight.map(|x| T::from_f64_lossy(x.as_f64() / sigma))
}
