use nalgebra::{DMatrix, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::EsmdaError;

/// Relative eigenvalue floor of the truncated pseudo-inverse.
pub const EIGEN_FLOOR: f64 = 1e-8;

/// Cross- and auto-covariance of parameters and predictions.
#[derive(Clone, Debug)]
pub struct CovPair {
    pub c_md: DMatrix<f64>,
    pub c_dd: DMatrix<f64>,
}

/// Stacks members as columns.
pub fn to_matrix(members: &[Vec<f64>], what: &'static str) -> Result<DMatrix<f64>, EsmdaError> {
    let n = members.len();
    let dim = members.first().map_or(0, |m| m.len());
    let mut out = DMatrix::zeros(dim, n);
    for (j, m) in members.iter().enumerate() {
        if m.len() != dim {
            return Err(EsmdaError::Dimension { what, expected: dim, got: m.len() });
        }
        out.column_mut(j).copy_from_slice(m);
    }
    Ok(out)
}

fn anomalies(x: &DMatrix<f64>) -> DMatrix<f64> {
    // Summing first keeps identical members exactly at zero anomaly.
    let mean = x.column_sum() / x.ncols() as f64;
    let mut a = x.clone();
    for mut col in a.column_iter_mut() {
        col -= &mean;
    }
    a
}

/// Sample covariances with `1/(N_e − 1)` normalization.
pub fn ensemble_covariances(params: &[Vec<f64>], preds: &[Vec<f64>]) -> Result<CovPair, EsmdaError> {
    if params.len() < 2 {
        return Err(EsmdaError::EnsembleSize(params.len()));
    }
    if preds.len() != params.len() {
        return Err(EsmdaError::Dimension { what: "prediction ensemble", expected: params.len(), got: preds.len() });
    }
    let dm = anomalies(&to_matrix(params, "parameters")?);
    let dd = anomalies(&to_matrix(preds, "predictions")?);
    let scale = 1.0 / (params.len() as f64 - 1.0);
    Ok(CovPair { c_md: &dm * dd.transpose() * scale, c_dd: &dd * dd.transpose() * scale })
}

fn check_cd(cd_diag: &[f64]) -> Result<(), EsmdaError> {
    match cd_diag.iter().position(|v| !(*v > 0.0 && v.is_finite())) {
        Some(k) => Err(EsmdaError::SingularCovariance(k)),
        None => Ok(()),
    }
}

/// `d_obs + √α · C_D^{½} · ε_j` for `N_e` members, with diagonal `C_D`.
pub fn perturb_observations(
    d_obs: &[f64],
    cd_diag: &[f64],
    alpha: f64,
    n_e: usize,
    seed: u64,
) -> Result<Vec<Vec<f64>>, EsmdaError> {
    if cd_diag.len() != d_obs.len() {
        return Err(EsmdaError::Dimension { what: "observation covariance", expected: d_obs.len(), got: cd_diag.len() });
    }
    check_cd(cd_diag)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale: Vec<f64> = cd_diag.iter().map(|v| (alpha * v).sqrt()).collect();
    Ok((0..n_e)
        .map(|_| {
            d_obs
                .iter()
                .zip(&scale)
                .map(|(d, s)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    d + s * e
                })
                .collect()
        })
        .collect())
}

/// `m_j + C_MD (C_DD + α C_D)⁺ (d_obs,j − d_j)` for every member, given
/// already perturbed observations.
pub fn analysis_step_with_obs(
    params: &[Vec<f64>],
    preds: &[Vec<f64>],
    perturbed_obs: &[Vec<f64>],
    cd_diag: &[f64],
    alpha: f64,
) -> Result<Vec<Vec<f64>>, EsmdaError> {
    let cov = ensemble_covariances(params, preds)?;
    let n_d = cov.c_dd.nrows();
    if cd_diag.len() != n_d {
        return Err(EsmdaError::Dimension { what: "observation covariance", expected: n_d, got: cd_diag.len() });
    }
    if perturbed_obs.len() != params.len() {
        return Err(EsmdaError::Dimension { what: "perturbed observations", expected: params.len(), got: perturbed_obs.len() });
    }
    check_cd(cd_diag)?;
    let mut s = cov.c_dd.clone();
    for (k, v) in cd_diag.iter().enumerate() {
        s[(k, k)] += alpha * v;
    }
    let s = (&s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let lmax = eig.eigenvalues.iter().fold(0.0f64, |m, v| m.max(*v));
    let inv = eig.eigenvalues.map(|l| if l > EIGEN_FLOOR * lmax && l > 0.0 { 1.0 / l } else { 0.0 });

    let innovation = to_matrix(perturbed_obs, "perturbed observations")? - to_matrix(preds, "predictions")?;
    // (C_MD V) Λ⁺ (Vᵀ Y)
    let mut vty = eig.eigenvectors.transpose() * innovation;
    for (mut row, w) in vty.row_iter_mut().zip(inv.iter()) {
        row *= *w;
    }
    let update = (&cov.c_md * &eig.eigenvectors) * vty;
    params
        .iter()
        .enumerate()
        .map(|(j, m)| {
            let out: Vec<f64> = m.iter().zip(update.column(j).iter()).map(|(a, b)| a + b).collect();
            if out.iter().any(|v| !v.is_finite()) {
                return Err(EsmdaError::NonFinite(j));
            }
            Ok(out)
        })
        .collect()
}

/// One ESMDA update with freshly perturbed observations.
pub fn analysis_step(
    params: &[Vec<f64>],
    preds: &[Vec<f64>],
    d_obs: &[f64],
    cd_diag: &[f64],
    alpha: f64,
    seed: u64,
) -> Result<Vec<Vec<f64>>, EsmdaError> {
    let obs = perturb_observations(d_obs, cd_diag, alpha, params.len(), seed)?;
    analysis_step_with_obs(params, preds, &obs, cd_diag, alpha)
}
