use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use resgen_geogen::{generate_dataset, Case, DatasetParams, Grid};
use resgen_metrics::*;

fn channel_set(n: usize, seed: u64) -> Vec<Vec<f64>> {
    let ds = generate_dataset(Case::Categorical, Grid::square(32), n, seed, &DatasetParams::default()).unwrap();
    (0..n).map(|k| ds.normalized(k).iter().map(|v| *v as f64).collect()).collect()
}

fn noisy(set: &[Vec<f64>], amp: f64, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    set.iter()
        .map(|f| {
            f.iter()
                .map(|v| {
                    let e: f64 = StandardNormal.sample(&mut rng);
                    v + amp * e
                })
                .collect()
        })
        .collect()
}

#[test]
fn identical_sets_score_perfectly() {
    let a = channel_set(40, 1);
    let s = FieldSet::new(&a, 32, 32).unwrap();
    let r = geostats_report(&s, &s, 0.5).unwrap();
    assert_eq!(r.variogram_mse, 0.0);
    assert_eq!(r.connectivity_mse, 0.0);
    assert!(r.histogram_kl.abs() < 1e-12);
    assert!((r.pca_correlation - 1.0).abs() < 1e-12);
    assert!(r.mds_mmd < 1e-12, "{}", r.mds_mmd);
}

#[test]
fn constant_field_has_flat_zero_variogram() {
    let f = vec![3.5; 16 * 12];
    assert!(semivariogram(&f, 16, 12, 6).iter().all(|v| *v == 0.0));
}

#[test]
fn variogram_of_stripes() {
    // Alternating columns: x-increments of odd lags are 1, even lags 0; y-increments 0.
    let (nx, ny) = (8, 8);
    let f: Vec<f64> = (0..nx * ny).map(|c| (c % nx % 2) as f64).collect();
    let g = semivariogram(&f, nx, ny, 2);
    let n1x = (nx - 1) * ny;
    let n1y = nx * (ny - 1);
    assert!((g[0] - 0.5 * n1x as f64 / (n1x + n1y) as f64).abs() < 1e-15);
    assert_eq!(g[1], 0.0);
}

#[test]
fn hand_built_kl() {
    let kl = kl_divergence(&[0.5, 0.5], &[0.25, 0.75]).unwrap();
    let expected = 0.5 * 2f64.ln() + 0.5 * (2.0f64 / 3.0).ln();
    assert!((kl - expected).abs() < 1e-15);
    assert!((kl - 0.1438).abs() < 1e-4);
    assert_eq!(kl_divergence(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), f64::INFINITY);
}

#[test]
fn connectivity_of_one_body_and_two_bodies() {
    let (nx, ny) = (10, 10);
    // Column 2 and column 7 are sand: same-body pairs only along y.
    let f: Vec<f64> = (0..nx * ny).map(|c| if c % nx == 2 || c % nx == 7 { 1.0 } else { 0.0 }).collect();
    let tau = connectivity_curve(&f, nx, ny, 0.5, 5);
    // Lag 5 along x joins the two columns: 10 cross pairs, 2·5 = 10 same-body pairs along y.
    assert_eq!(tau[4], 10.0 / 20.0);
    assert_eq!(tau[0], 1.0);
}

#[test]
fn noise_sweep_degrades_monotonically() {
    let a = channel_set(40, 2);
    let sa = FieldSet::new(&a, 32, 32).unwrap();
    let mut last_v = 0.0;
    let mut last_kl = 0.0;
    for (k, amp) in [0.05, 0.3, 0.9].into_iter().enumerate() {
        let b = noisy(&a, amp, 10 + k as u64);
        let sb = FieldSet::new(&b, 32, 32).unwrap();
        let r = geostats_report(&sa, &sb, 0.5).unwrap();
        assert!(r.variogram_mse > last_v && r.histogram_kl > last_kl, "amp {amp}: {r:?}");
        assert!(r.pca_correlation < 1.0);
        last_v = r.variogram_mse;
        last_kl = r.histogram_kl;
    }
}

#[test]
fn histogram_bins_follow_the_reference_range() {
    let a = vec![vec![-1.0, 1.0, 0.0, 0.5]];
    let b = vec![vec![-3.0, 2.0, 1.0, 1.0]];
    let (sa, sb) = (FieldSet::new(&a, 2, 2).unwrap(), FieldSet::new(&b, 2, 2).unwrap());
    let h = histogram(&sb, -1.0, 1.0, 4);
    let counts: Vec<f64> = h.iter().map(|v| v.round()).collect();
    assert_eq!(counts, vec![1.0, 0.0, 0.0, 0.0, 2.0, 1.0]);
    // Moving b's outliers further out leaves the divergence unchanged.
    let far = vec![vec![-30.0, 20.0, 1.0, 1.0]];
    let sf = FieldSet::new(&far, 2, 2).unwrap();
    assert_eq!(histogram_kl(&sa, &sb, 4).unwrap(), histogram_kl(&sa, &sf, 4).unwrap());
}

#[test]
fn mismatched_grids_are_rejected() {
    let a = vec![vec![0.0; 64]];
    let b = vec![vec![0.0; 64]];
    let sa = FieldSet::new(&a, 8, 8).unwrap();
    let sb = FieldSet::new(&b, 16, 4).unwrap();
    assert!(variogram_mse(&sa, &sb, 3).is_err());
    assert!(FieldSet::new(&[], 8, 8).is_err());
    assert!(FieldSet::new(&a, 4, 4).is_err());
}

#[test]
fn mds_separates_distinct_sets() {
    let a = channel_set(30, 3);
    let b: Vec<Vec<f64>> = a.iter().map(|f| f.iter().map(|v| v + 2.0).collect()).collect();
    let sa = FieldSet::new(&a, 32, 32).unwrap();
    let sb = FieldSet::new(&b, 32, 32).unwrap();
    assert!(mds_mmd(&sa, &sb).unwrap() > 0.5);
}
