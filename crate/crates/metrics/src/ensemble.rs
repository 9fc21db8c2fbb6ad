use serde::{Deserialize, Serialize};

use crate::error::MetricsError;

/// Normalized data mismatch `(1/N_d) (d − d_obs)ᵀ C_D⁻¹ (d − d_obs)` for a
/// diagonal `C_D` given by its variances.
pub fn data_mismatch(d: &[f64], d_obs: &[f64], cd_diag: &[f64]) -> Result<f64, MetricsError> {
    check_len(d_obs.len(), d.len())?;
    check_len(d_obs.len(), cd_diag.len())?;
    if d.is_empty() {
        return Err(MetricsError::Empty("data vector"));
    }
    if let Some(k) = cd_diag.iter().position(|v| !(*v > 0.0)) {
        return Err(MetricsError::SingularCovariance(k));
    }
    let sum: f64 = d.iter().zip(d_obs).zip(cd_diag).map(|((a, b), v)| (a - b) * (a - b) / v).sum();
    Ok(sum / d.len() as f64)
}

/// Per-member mismatches and their mean.
pub fn mean_data_mismatch(preds: &[Vec<f64>], d_obs: &[f64], cd_diag: &[f64]) -> Result<(Vec<f64>, f64), MetricsError> {
    if preds.is_empty() {
        return Err(MetricsError::Empty("ensemble"));
    }
    let each = preds.iter().map(|d| data_mismatch(d, d_obs, cd_diag)).collect::<Result<Vec<_>, _>>()?;
    let mean = each.iter().sum::<f64>() / each.len() as f64;
    Ok((each, mean))
}

/// `‖m_j − m_true‖₂ / √M` for every member.
pub fn rmse_ensemble(members: &[Vec<f64>], truth: &[f64]) -> Result<Vec<f64>, MetricsError> {
    members
        .iter()
        .map(|m| {
            check_len(truth.len(), m.len())?;
            let ss: f64 = m.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum();
            Ok((ss / truth.len() as f64).sqrt())
        })
        .collect()
}

/// Mean RMS distance of the members from the ensemble mean.
pub fn spread(members: &[Vec<f64>]) -> Result<f64, MetricsError> {
    if members.len() < 2 {
        return Err(MetricsError::Empty("ensemble of at least two members"));
    }
    let mean = ensemble_mean(members)?;
    let d = rmse_ensemble(members, &mean)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

pub fn ensemble_mean(members: &[Vec<f64>]) -> Result<Vec<f64>, MetricsError> {
    let first = members.first().ok_or(MetricsError::Empty("ensemble"))?;
    let mut mean = vec![0.0; first.len()];
    for m in members {
        check_len(first.len(), m.len())?;
        for (a, b) in mean.iter_mut().zip(m) {
            *a += b;
        }
    }
    let n = members.len() as f64;
    mean.iter_mut().for_each(|v| *v /= n);
    Ok(mean)
}

/// Cellwise sample standard deviation (1/(N−1)).
pub fn ensemble_std(members: &[Vec<f64>]) -> Result<Vec<f64>, MetricsError> {
    if members.len() < 2 {
        return Err(MetricsError::Empty("ensemble of at least two members"));
    }
    let mean = ensemble_mean(members)?;
    let mut var = vec![0.0; mean.len()];
    for m in members {
        for ((v, x), mu) in var.iter_mut().zip(m).zip(&mean) {
            *v += (x - mu) * (x - mu);
        }
    }
    let n = (members.len() - 1) as f64;
    Ok(var.into_iter().map(|v| (v / n).sqrt()).collect())
}

/// Balanced accuracy and the classes left out because truth lacks them.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BalancedAccuracy {
    pub value: f64,
    pub recalls: Vec<Option<f64>>,
    pub absent: Vec<usize>,
}

/// Mean per-class recall over the classes present in `truth`.
pub fn balanced_accuracy(pred: &[usize], truth: &[usize], classes: usize) -> Result<BalancedAccuracy, MetricsError> {
    check_len(truth.len(), pred.len())?;
    let mut hits = vec![0usize; classes];
    let mut total = vec![0usize; classes];
    for (&p, &t) in pred.iter().zip(truth) {
        for label in [p, t] {
            if label >= classes {
                return Err(MetricsError::Label { label, classes });
            }
        }
        total[t] += 1;
        if p == t {
            hits[t] += 1;
        }
    }
    let recalls: Vec<Option<f64>> =
        hits.iter().zip(&total).map(|(&h, &n)| (n > 0).then(|| h as f64 / n as f64)).collect();
    let present: Vec<f64> = recalls.iter().flatten().copied().collect();
    if present.is_empty() {
        return Err(MetricsError::NoClasses);
    }
    let absent = (0..classes).filter(|&c| total[c] == 0).collect();
    Ok(BalancedAccuracy { value: present.iter().sum::<f64>() / present.len() as f64, recalls, absent })
}

/// Nearest-level classification of continuous values (e.g. decoded log-perm
/// onto the facies levels).
pub fn nearest_level(values: &[f64], levels: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|v| {
            levels
                .iter()
                .enumerate()
                .min_by(|a, b| (a.1 - v).abs().total_cmp(&(b.1 - v).abs()))
                .map(|(k, _)| k)
                .unwrap_or(0)
        })
        .collect()
}

/// One row of the per-iteration assimilation record.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub iteration: usize,
    pub mean_data_mismatch: f64,
    pub rmse: Vec<f64>,
    pub rmse_mean: f64,
    pub spread: f64,
    pub balanced_accuracy: Option<f64>,
    pub frd: Option<f64>,
}

pub(crate) fn check_len(expected: usize, got: usize) -> Result<(), MetricsError> {
    if expected != got {
        return Err(MetricsError::Length { expected, got });
    }
    Ok(())
}
