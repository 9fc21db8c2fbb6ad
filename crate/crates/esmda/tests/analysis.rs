use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use resgen_esmda::*;

#[test]
fn constant_schedules() {
    assert_eq!(inflation_schedule(1), vec![1.0]);
    assert_eq!(inflation_schedule(4), vec![4.0; 4]);
    assert_eq!(inflation_schedule(10), vec![10.0; 10]);
    for n in 1..=12 {
        let s: f64 = inflation_schedule(n).iter().map(|a| 1.0 / a).sum();
        assert!((s - 1.0).abs() < 1e-10);
    }
}

#[test]
fn config_checks_the_inverse_sum() {
    let ok = MdaConfig { n_a: 3, n_e: 10, alphas: Some(vec![7.0, 4.0, 2.0]), ..Default::default() };
    assert!(ok.validate().is_err()); // 1/7 + 1/4 + 1/2 ≠ 1
    let ok = MdaConfig { n_a: 2, n_e: 10, alphas: Some(vec![2.0, 2.0]), ..Default::default() };
    assert!(ok.validate().is_ok());
    let bad = MdaConfig { n_a: 2, n_e: 10, alphas: Some(vec![-2.0, 2.0 / 3.0]), ..Default::default() };
    assert!(matches!(bad.validate(), Err(EsmdaError::Schedule(_))));
    let small = MdaConfig { n_e: 1, ..Default::default() };
    assert!(matches!(small.validate(), Err(EsmdaError::EnsembleSize(1))));
}

#[test]
fn covariance_examples() {
    let same = vec![vec![1.0, 2.0]; 5];
    let c = ensemble_covariances(&same, &vec![vec![3.0]; 5]).unwrap();
    assert!(c.c_md.iter().all(|v| *v == 0.0) && c.c_dd.iter().all(|v| *v == 0.0), "{} {}", c.c_md, c.c_dd);

    let c = ensemble_covariances(&[vec![0.0], vec![2.0]], &[vec![0.0], vec![2.0]]).unwrap();
    assert_eq!(c.c_md[(0, 0)], 2.0);
    assert_eq!(c.c_dd[(0, 0)], 2.0);

    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let preds: Vec<Vec<f64>> = (0..7).map(|_| (0..5).map(|_| StandardNormal.sample(&mut rng)).collect()).collect();
    let c = ensemble_covariances(&preds, &preds).unwrap();
    assert_eq!(c.c_dd, c.c_dd.transpose());
    assert!(matches!(ensemble_covariances(&[vec![0.0]], &[vec![0.0]]), Err(EsmdaError::EnsembleSize(1))));
}

#[test]
fn perturbation_statistics() {
    let d = vec![1.0, -2.0, 5.0];
    let cd = vec![4.0, 1.0, 0.25];
    assert_eq!(perturb_observations(&d, &cd, 0.0, 3, 1).unwrap(), vec![d.clone(); 3]);

    let alpha = 4.0;
    let n = 10_000;
    let draws = perturb_observations(&d, &cd, alpha, n, 2).unwrap();
    let mut cov = [[0.0; 3]; 3];
    for x in &draws {
        for a in 0..3 {
            for b in 0..3 {
                cov[a][b] += (x[a] - d[a]) * (x[b] - d[b]) / n as f64;
            }
        }
    }
    for a in 0..3 {
        assert!((cov[a][a] / (alpha * cd[a]) - 1.0).abs() < 0.03, "{cov:?}");
        for b in 0..3 {
            if a != b {
                let corr = cov[a][b] / (cov[a][a] * cov[b][b]).sqrt();
                assert!(corr.abs() < 0.03);
            }
        }
    }
    assert!(matches!(perturb_observations(&d, &[1.0, 0.0, 1.0], 1.0, 2, 0), Err(EsmdaError::SingularCovariance(1))));
}

#[test]
fn hand_computed_scalar_update() {
    let m = vec![vec![0.0], vec![2.0]];
    let out = analysis_step_with_obs(&m, &m, &[vec![2.0], vec![2.0]], &[1.0], 1.0).unwrap();
    assert!((out[0][0] - 4.0 / 3.0).abs() < 1e-12);
    assert!((out[1][0] - 2.0).abs() < 1e-12);
}

#[test]
fn zero_innovation_and_zero_cross_covariance_leave_the_ensemble() {
    let m = vec![vec![0.3, 1.0], vec![-0.5, 2.0], vec![1.5, 0.0]];
    let d = vec![vec![1.0, 0.0], vec![2.0, 1.0], vec![0.5, 3.0]];
    let out = analysis_step_with_obs(&m, &d, &d, &[1.0, 2.0], 4.0).unwrap();
    for (a, b) in out.iter().zip(&m) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() < 1e-14);
        }
    }
    // Parameter anomalies orthogonal to data anomalies.
    let m = vec![vec![1.0], vec![-1.0], vec![1.0], vec![-1.0]];
    let d = vec![vec![1.0], vec![1.0], vec![-1.0], vec![-1.0]];
    let obs = vec![vec![7.0]; 4];
    let out = analysis_step_with_obs(&m, &d, &obs, &[1.0], 1.0).unwrap();
    assert_eq!(out, m);
}

fn gaussian_prior(n: usize, mean: &[f64], chol: &DMatrix<f64>, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|_| {
            let e = DVector::from_fn(mean.len(), |_, _| StandardNormal.sample(&mut rng));
            let x = chol * e;
            mean.iter().zip(x.iter()).map(|(m, v)| m + v).collect()
        })
        .collect()
}

struct Linear(DMatrix<f64>);

impl ForwardModel for Linear {
    fn forward(&self, models: &[Vec<f64>]) -> Result<Vec<Vec<f64>>, EsmdaError> {
        Ok(models.iter().map(|m| (&self.0 * DVector::from_column_slice(m)).iter().copied().collect()).collect())
    }
}

struct Problem {
    h: DMatrix<f64>,
    mu0: Vec<f64>,
    c0: DMatrix<f64>,
    cd: Vec<f64>,
    d_obs: Vec<f64>,
}

impl Problem {
    fn new() -> Self {
        let h = DMatrix::from_row_slice(2, 3, &[1.0, 0.5, 0.0, 0.0, -1.0, 2.0]);
        let l = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.4, 0.8, 0.0, -0.2, 0.3, 0.6]);
        Self { h, mu0: vec![0.5, -1.0, 0.0], c0: &l * l.transpose(), cd: vec![0.5, 1.0], d_obs: vec![1.2, 0.4] }
    }

    /// Conjugate-Gaussian posterior.
    fn posterior(&self) -> (DVector<f64>, DMatrix<f64>) {
        let cd = DMatrix::from_diagonal(&DVector::from_vec(self.cd.clone()));
        let s = &self.h * &self.c0 * self.h.transpose() + cd;
        let k = &self.c0 * self.h.transpose() * s.try_inverse().unwrap();
        let mu0 = DVector::from_vec(self.mu0.clone());
        let mean = &mu0 + &k * (DVector::from_vec(self.d_obs.clone()) - &self.h * &mu0);
        let cov = &self.c0 - &k * &self.h * &self.c0;
        (mean, cov)
    }

    fn run(&self, n_e: usize, n_a: usize, seed: u64) -> Vec<Vec<f64>> {
        let chol = self.c0.clone().cholesky().unwrap().l();
        let prior = Ensemble::new(gaussian_prior(n_e, &self.mu0, &chol, seed), Space::Model, 0).unwrap();
        let cfg = MdaConfig { n_a, n_e, ..Default::default() };
        let out = run_latent_assimilation(&Identity { dim: 3 }, prior, &Linear(self.h.clone()), &self.d_obs, &self.cd, &cfg, seed + 99)
            .unwrap();
        out.posterior().models.clone()
    }
}

#[test]
fn linear_gaussian_posterior_matches_kalman() {
    let p = Problem::new();
    let (mean, cov) = p.posterior();
    let post = p.run(10_000, 4, 1);
    let m = to_matrix(&post, "posterior").unwrap();
    let emp_mean = m.column_mean();
    let mut a = m.clone();
    for mut c in a.column_iter_mut() {
        c -= &emp_mean;
    }
    let emp_cov = &a * a.transpose() / (post.len() as f64 - 1.0);
    assert!((&emp_mean - &mean).amax() < 0.03, "{emp_mean} vs {mean}");
    assert!((&emp_cov - &cov).amax() < 0.03, "{cov}");
}

#[test]
fn mean_error_shrinks_with_ensemble_size() {
    let p = Problem::new();
    let (mean, _) = p.posterior();
    let err = |n_e: usize| -> f64 {
        (0..6)
            .map(|s| {
                let post = p.run(n_e, 4, 10 + s);
                let m = to_matrix(&post, "posterior").unwrap().column_mean();
                (m - &mean).norm()
            })
            .sum::<f64>()
            / 6.0
    };
    let (e2, e3, e4) = (err(100), err(1000), err(10_000));
    assert!(e2 > e3 && e3 > e4, "{e2} {e3} {e4}");
    // Roughly 1/√N_e per decade: a factor near 3.16 each time.
    assert!(e2 / e4 > 4.0, "{e2} {e4}");
}

#[test]
fn permuting_members_permutes_the_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut draw = |n: usize, k: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..k).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    };
    let (m, d, obs) = (draw(6, 4), draw(6, 3), draw(6, 3));
    let cd = [1.0, 0.5, 2.0];
    let out = analysis_step_with_obs(&m, &d, &obs, &cd, 3.0).unwrap();
    let perm = [3, 0, 5, 1, 4, 2];
    let p = |v: &Vec<Vec<f64>>| perm.iter().map(|&k| v[k].clone()).collect::<Vec<_>>();
    let out_p = analysis_step_with_obs(&p(&m), &p(&d), &p(&obs), &cd, 3.0).unwrap();
    for (a, b) in out_p.iter().zip(p(&out)) {
        for (x, y) in a.iter().zip(&b) {
            assert!((x - y).abs() < 1e-12);
        }
    }
}

#[test]
fn rescaling_data_and_noise_leaves_the_update() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut draw = |n: usize, k: usize| -> Vec<Vec<f64>> {
        (0..n).map(|_| (0..k).map(|_| StandardNormal.sample(&mut rng)).collect()).collect()
    };
    let (m, d, obs) = (draw(8, 3), draw(8, 5), draw(8, 5));
    let cd = [1.0, 0.5, 2.0, 0.1, 3.0];
    let out = analysis_step_with_obs(&m, &d, &obs, &cd, 2.0).unwrap();
    let s = 37.5;
    let sc = |v: &Vec<Vec<f64>>| v.iter().map(|r| r.iter().map(|x| x * s).collect()).collect::<Vec<Vec<f64>>>();
    let cds: Vec<f64> = cd.iter().map(|v| v * s * s).collect();
    let out_s = analysis_step_with_obs(&m, &sc(&d), &sc(&obs), &cds, 2.0).unwrap();
    for (a, b) in out.iter().zip(&out_s) {
        for (x, y) in a.iter().zip(b) {
            assert!((x - y).abs() <= 1e-8 * x.abs().max(1.0));
        }
    }
}

#[test]
fn rank_deficient_systems_stay_finite() {
    // Many data, two members: C_DD has rank one and tiny noise.
    let m = vec![vec![0.0], vec![1.0]];
    let d = vec![vec![0.0; 50], vec![1.0; 50]];
    let obs = vec![vec![0.5; 50]; 2];
    let out = analysis_step_with_obs(&m, &d, &obs, &[1e-14; 50], 1.0).unwrap();
    assert!(out.iter().flatten().all(|v| v.is_finite()));
    assert!((out[0][0] - 0.5).abs() < 1e-6 && (out[1][0] - 0.5).abs() < 1e-6);
}
