use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use resgen_metrics::*;

#[test]
fn mismatch_examples() {
    assert_eq!(data_mismatch(&[1.0, 2.0], &[1.0, 2.0], &[1.0, 4.0]).unwrap(), 0.0);
    assert_eq!(data_mismatch(&[3.0], &[1.0], &[4.0]).unwrap(), 1.0);
    assert!(matches!(data_mismatch(&[3.0], &[1.0], &[0.0]), Err(MetricsError::SingularCovariance(0))));
    assert!(matches!(data_mismatch(&[3.0, 1.0], &[1.0], &[1.0]), Err(MetricsError::Length { .. })));
}

#[test]
fn mismatch_of_consistent_residuals_averages_one() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let stds = [4.0, 3.0, 2.0, 0.5];
    let var: Vec<f64> = stds.iter().map(|s| s * s).collect();
    let d_obs = vec![10.0; 4];
    let draws: Vec<Vec<f64>> = (0..10_000)
        .map(|_| {
            d_obs
                .iter()
                .zip(&stds)
                .map(|(d, s)| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    d + s * e
                })
                .collect()
        })
        .collect();
    let (_, mean) = mean_data_mismatch(&draws, &d_obs, &var).unwrap();
    assert!((mean - 1.0).abs() < 0.05, "{mean}");
}

#[test]
fn balanced_accuracy_examples() {
    let truth = [0, 0, 1, 1];
    assert_eq!(balanced_accuracy(&truth, &truth, 2).unwrap().value, 1.0);
    // Recall of class 0 is 1/2, of class 1 is 1.
    assert_eq!(balanced_accuracy(&[0, 1, 1, 1], &truth, 2).unwrap().value, 0.75);
    assert_eq!(balanced_accuracy(&[1, 1, 0, 0], &truth, 2).unwrap().value, 0.0);
    let r = balanced_accuracy(&[0, 1, 2, 2], &[0, 1, 1, 1], 3).unwrap();
    assert_eq!(r.absent, vec![2]);
    assert!((r.value - (1.0 + 1.0 / 3.0) / 2.0).abs() < 1e-15);
    assert!(matches!(balanced_accuracy(&[], &[], 3), Err(MetricsError::NoClasses)));
    assert!(matches!(balanced_accuracy(&[5], &[0], 3), Err(MetricsError::Label { label: 5, .. })));
}

#[test]
fn balanced_accuracy_ignores_class_names() {
    let truth = [0, 0, 1, 2, 2, 2, 1, 0];
    let pred = [0, 1, 1, 2, 0, 2, 2, 0];
    let perm = [2, 0, 1];
    let a = balanced_accuracy(&pred, &truth, 3).unwrap().value;
    let pt: Vec<usize> = truth.iter().map(|&c| perm[c]).collect();
    let pp: Vec<usize> = pred.iter().map(|&c| perm[c]).collect();
    assert_eq!(balanced_accuracy(&pp, &pt, 3).unwrap().value, a);
}

#[test]
fn rmse_examples() {
    let truth = vec![0.0; 4];
    assert_eq!(rmse_ensemble(std::slice::from_ref(&truth), &truth).unwrap(), vec![0.0]);
    assert_eq!(rmse_ensemble(&[vec![1.0; 4]], &truth).unwrap(), vec![1.0]);
    let r = rmse_ensemble(&[vec![0.5, -1.0, 2.0, 0.0]], &truth).unwrap()[0];
    let r3 = rmse_ensemble(&[vec![1.5, -3.0, 6.0, 0.0]], &truth).unwrap()[0];
    assert!((r3 - 3.0 * r).abs() < 1e-14);
    assert!(rmse_ensemble(&[vec![1.0; 3]], &truth).is_err());
}

#[test]
fn spread_examples() {
    assert_eq!(spread(&[vec![1.0, 2.0], vec![1.0, 2.0]]).unwrap(), 0.0);
    assert_eq!(spread(&[vec![-1.0], vec![1.0]]).unwrap(), 1.0);
    let a = vec![vec![0.3, 1.0, -2.0], vec![1.0, 0.0, 0.5], vec![-0.4, 2.0, 1.0]];
    let shifted: Vec<Vec<f64>> = a.iter().map(|m| m.iter().map(|v| v + 7.5).collect()).collect();
    assert!((spread(&a).unwrap() - spread(&shifted).unwrap()).abs() < 1e-12);
}

#[test]
fn nearest_level_picks_closest() {
    assert_eq!(nearest_level(&[-2.0, 0.4, 0.6, 9.0], &[0.0, 1.0, 5.0]), vec![0, 0, 1, 2]);
}
