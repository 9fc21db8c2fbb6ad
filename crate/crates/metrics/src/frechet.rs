use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::MetricsError;

/// Sample mean and covariance (1/(N−1)) of row vectors.
pub fn moments(samples: &[Vec<f64>]) -> Result<(DVector<f64>, DMatrix<f64>), MetricsError> {
    let n = samples.len();
    if n < 2 {
        return Err(MetricsError::Empty("at least two feature vectors"));
    }
    let dim = samples[0].len();
    let mut x = DMatrix::zeros(n, dim);
    for (r, s) in samples.iter().enumerate() {
        crate::ensemble::check_len(dim, s.len())?;
        if s.iter().any(|v| !v.is_finite()) {
            return Err(MetricsError::NonFinite("features"));
        }
        x.row_mut(r).copy_from_slice(s);
    }
    let mean = x.row_mean().transpose();
    for mut row in x.row_iter_mut() {
        row -= mean.transpose();
    }
    let cov = x.transpose() * &x / (n as f64 - 1.0);
    Ok((mean, cov))
}

fn psd_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let sym = (m + m.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym);
    let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    &eig.eigenvectors * DMatrix::from_diagonal(&vals) * eig.eigenvectors.transpose()
}

/// Fréchet distance between Gaussians with the given moments:
/// `‖μ₁ − μ₂‖² + Tr(C₁ + C₂ − 2 (C₁^{½} C₂ C₁^{½})^{½})`.
pub fn frechet_from_moments(
    mu1: &DVector<f64>,
    c1: &DMatrix<f64>,
    mu2: &DVector<f64>,
    c2: &DMatrix<f64>,
) -> Result<f64, MetricsError> {
    crate::ensemble::check_len(mu1.len(), mu2.len())?;
    let s1 = psd_sqrt(c1);
    let inner = &s1 * c2 * &s1;
    let inner = (&inner + inner.transpose()) * 0.5;
    let cross: f64 = SymmetricEigen::new(inner).eigenvalues.iter().map(|l| l.max(0.0).sqrt()).sum();
    let d = (mu1 - mu2).norm_squared() + c1.trace() + c2.trace() - 2.0 * cross;
    if !d.is_finite() {
        return Err(MetricsError::NonFinite("Fréchet distance"));
    }
    Ok(d.max(0.0))
}

/// Fréchet distance between two feature samples.
pub fn frechet_distance(a: &[Vec<f64>], b: &[Vec<f64>]) -> Result<f64, MetricsError> {
    let (m1, c1) = moments(a)?;
    let (m2, c2) = moments(b)?;
    frechet_from_moments(&m1, &c1, &m2, &c2)
}
