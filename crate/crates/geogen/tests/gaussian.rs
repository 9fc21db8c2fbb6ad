use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resgen_geogen::{build_prior_ensemble, gaussian_random_field, CovarianceModel, CovarianceSpec, GaussianFieldSampler, GeoError, Grid, Realization};

fn spec(mean: f64, std: f64, range: f64) -> CovarianceSpec {
    CovarianceSpec {
        model: CovarianceModel::Exponential,
        mean,
        std,
        range,
    }
}

fn fields(sampler: &GaussianFieldSampler, n: usize, seed: u64) -> Vec<Realization> {
    (0..n as u64)
        .map(|k| sampler.sample(&mut ChaCha8Rng::seed_from_u64(seed + k)))
        .collect()
}

/// Mean of (Z(x) − m)(Z(x+h) − m) over both axes, with the known mean `m`.
fn covariance_at(fs: &[Realization], lag: usize, mean: f64) -> f64 {
    let (mut acc, mut n) = (0.0, 0usize);
    for f in fs {
        let g = f.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let a = f.values[g.index(i, j)] - mean;
                if i + lag < g.nx {
                    acc += a * (f.values[g.index(i + lag, j)] - mean);
                    n += 1;
                }
                if j + lag < g.ny {
                    acc += a * (f.values[g.index(i, j + lag)] - mean);
                    n += 1;
                }
            }
        }
    }
    acc / n as f64
}

fn semivariogram(fs: &[Realization], lag: usize) -> f64 {
    let (mut acc, mut n) = (0.0, 0usize);
    for f in fs {
        let g = f.grid;
        for j in 0..g.ny {
            for i in 0..g.nx {
                let a = f.values[g.index(i, j)];
                if i + lag < g.nx {
                    acc += (a - f.values[g.index(i + lag, j)]).powi(2);
                    n += 1;
                }
                if j + lag < g.ny {
                    acc += (a - f.values[g.index(i, j + lag)]).powi(2);
                    n += 1;
                }
            }
        }
    }
    0.5 * acc / n as f64
}

#[test]
fn zero_std_gives_constant_mean() {
    let f = gaussian_random_field(Grid::square(16), spec(3.0, 0.0, 10.0), 1).unwrap();
    assert!(f.values.iter().all(|&v| v == 3.0));
}

#[test]
fn invalid_specs_are_rejected() {
    assert!(matches!(
        gaussian_random_field(Grid::square(16), spec(3.0, -1.0, 10.0), 1),
        Err(GeoError::Covariance(_))
    ));
    assert!(gaussian_random_field(Grid::square(16), spec(3.0, 1.0, 0.0), 1).is_err());
    assert!(gaussian_random_field(Grid::square(4), spec(3.0, 1.0, 2.0), 1).is_err());
}

#[test]
fn pooled_moments_match_the_prior_specification() {
    let s = GaussianFieldSampler::new(Grid::square(48), spec(3.0, 1.5, 10.0)).unwrap();
    assert!(s.uses_fft());
    let fs = fields(&s, 200, 1000);
    let all: Vec<f64> = fs.iter().flat_map(|f| f.values.iter().copied()).collect();
    let mean = all.iter().sum::<f64>() / all.len() as f64;
    let std = (all.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (all.len() - 1) as f64).sqrt();
    assert!((mean - 3.0).abs() < 0.05, "mean {mean}");
    assert!((std - 1.5).abs() < 0.05, "std {std}");
}

#[test]
fn covariance_at_the_range_is_variance_over_e() {
    let s = GaussianFieldSampler::new(Grid::square(48), spec(3.0, 1.5, 10.0)).unwrap();
    let fs = fields(&s, 500, 7);
    let c = covariance_at(&fs, 10, 3.0);
    let expected = 2.25 / std::f64::consts::E;
    assert!((c / expected - 1.0).abs() < 0.10, "C(10) = {c}, expected {expected}");
}

#[test]
fn semivariogram_follows_the_exponential_model() {
    let sp = spec(3.0, 1.5, 10.0);
    let s = GaussianFieldSampler::new(Grid::square(48), sp).unwrap();
    let fs = fields(&s, 200, 300);
    for lag in 1..=20 {
        let model = sp.std * sp.std - sp.covariance(lag as f64);
        let got = semivariogram(&fs, lag);
        assert!((got / model - 1.0).abs() < 0.15, "lag {lag}: {got} vs {model}");
    }
}

#[test]
fn cholesky_and_fft_paths_agree_statistically() {
    let sp = spec(0.0, 1.0, 4.0);
    let grid = Grid::square(12);
    let fft = GaussianFieldSampler::new(grid, sp).unwrap();
    let chol = GaussianFieldSampler::with_cholesky(grid, sp).unwrap();
    assert!(fft.uses_fft() && !chol.uses_fft());
    for lag in [1, 4] {
        let expected = sp.covariance(lag as f64);
        for s in [&fft, &chol] {
            let c = covariance_at(&fields(s, 2000, 5), lag, 0.0);
            assert!((c - expected).abs() < 0.05, "lag {lag}: {c} vs {expected}");
        }
    }
}

#[test]
fn prior_ensembles_are_reproducible_and_need_two_members() {
    let sp = spec(3.0, 1.5, 10.0);
    let g = Grid::square(32);
    assert!(matches!(build_prior_ensemble(g, sp, 1, 0), Err(GeoError::EnsembleSize(1))));
    let a = build_prior_ensemble(g, sp, 5, 42).unwrap();
    let b = build_prior_ensemble(g, sp, 5, 42).unwrap();
    assert_eq!(a, b);
    assert_ne!(a[0], a[1]);
}

#[test]
fn ensemble_mean_fluctuates_at_the_clt_rate() {
    let sp = spec(3.0, 1.5, 10.0);
    let g = Grid::square(32);
    let mut dev2 = 0.0;
    let mut n = 0usize;
    for rep in 0..20u64 {
        let ens = build_prior_ensemble(g, sp, 100, rep * 1000).unwrap();
        for c in 0..g.cells() {
            let m = ens.iter().map(|r| r.values[c]).sum::<f64>() / 100.0;
            dev2 += (m - 3.0).powi(2);
            n += 1;
        }
    }
    let std = (dev2 / n as f64).sqrt();
    assert!((std / 0.15 - 1.0).abs() < 0.2, "cellwise std of the mean {std}");
}
