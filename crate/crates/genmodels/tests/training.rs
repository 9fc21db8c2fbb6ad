use resgen_genmodels::{
    reconstruction_mse, sample_latent, split_validation, train, GenError, GenerativeModel, ModelConfig, ModelKind,
};
use resgen_geogen::{generate_dataset, Case, DatasetParams, Grid};
use resgen_metrics::{ClassifierConfig, FeatureModel};
use resgen_nn::Network;

fn tiny(kind: ModelKind, epochs: usize) -> GenerativeModel {
    let mut cfg = ModelConfig::new(kind);
    cfg.latent_dim = 4;
    cfg.width_scale = 0.0625;
    cfg.train.epochs = epochs;
    cfg.train.batch_size = 16;
    cfg.train.frd_samples = 16;
    GenerativeModel::new(cfg, [1, 16, 16], 5).unwrap()
}

fn channel_fields(n: usize, count: usize, seed: u64) -> Vec<Vec<f32>> {
    let ds = generate_dataset(Case::Categorical, Grid::square(n), count, seed, &DatasetParams::default()).unwrap();
    (0..count).map(|k| ds.normalized(k)).collect()
}

fn critic() -> FeatureModel {
    let cfg = ClassifierConfig {
        conv_filters: vec![2, 4],
        feature_width: 6,
        ..ClassifierConfig::default()
    };
    FeatureModel {
        net: Network::new(&[1, 16, 16], FeatureModel::architecture(&cfg, 3), 1).unwrap(),
        num_classes: 3,
    }
}

#[test]
fn zero_epochs_keeps_the_initial_weights() {
    let data = channel_fields(16, 24, 1);
    for kind in ModelKind::ALL {
        let mut m = tiny(kind, 0);
        let before = m.decoder.params().to_vec();
        let trace = train(&mut m, &data, None, 3).unwrap();
        assert!(trace.records.is_empty());
        assert_eq!(m.decoder.params(), before.as_slice());
    }
}

#[test]
fn training_is_reproducible() {
    let data = channel_fields(16, 48, 2);
    let c = critic();
    for kind in ModelKind::ALL {
        let run = || {
            let mut m = tiny(kind, 2);
            let trace = train(&mut m, &data, Some(&c), 9).unwrap();
            (trace, m.decoder.params().to_vec())
        };
        let (ta, wa) = run();
        let (tb, wb) = run();
        assert_eq!(ta, tb, "{kind}");
        assert_eq!(wa, wb, "{kind}");
        assert_eq!(ta.records.len(), 2);
        for r in &ta.records {
            assert!(r.total.is_finite());
        }
        if kind == ModelKind::Dcgan {
            assert!(ta.records.iter().all(|r| r.frd.is_some() && r.generator > 0.0 && r.discriminator > 0.0));
        } else {
            assert!(ta.records.iter().all(|r| r.val_mse.is_some() && r.recon > 0.0));
        }
    }
}

#[test]
fn non_finite_loss_names_the_epoch_and_component() {
    let mut data = channel_fields(16, 24, 3);
    for f in &mut data {
        f[5] = f32::NAN;
    }
    let mut m = tiny(ModelKind::Dcvae, 3);
    match train(&mut m, &data, None, 1) {
        Err(GenError::NonFinite { epoch, component }) => {
            assert_eq!(epoch, 1);
            assert_eq!(component, "reconstruction loss");
        }
        other => panic!("expected a non-finite error, got {other:?}"),
    }
}

#[test]
fn validation_split_is_disjoint_and_seeded() {
    let (a, b) = split_validation(100, 0.1, 4);
    assert_eq!((a.len(), b.len()), (90, 10));
    let mut all: Vec<usize> = a.iter().chain(&b).copied().collect();
    all.sort_unstable();
    assert_eq!(all, (0..100).collect::<Vec<_>>());
    assert_eq!(split_validation(100, 0.1, 4), (a, b));
}

/// Desk-scale convolutional VAE on 2 000 channelized fields.
#[test]
fn desk_vae_learns_and_matches_the_prior() {
    let data = channel_fields(32, 2000, 7);
    let mut cfg = ModelConfig::new(ModelKind::Dcvae);
    cfg.train.epochs = 50;
    let mut m = GenerativeModel::new(cfg, [1, 32, 32], 1).unwrap();
    let trace = train(&mut m, &data, None, 5).unwrap();
    let first = trace.records[0].recon;
    let last = trace.records.last().unwrap().recon;
    assert!(last < 0.5 * first, "recon {first} -> {last}");

    let (_, val_idx) = split_validation(data.len(), m.config.train.validation_fraction, 5);
    let val: Vec<Vec<f32>> = val_idx.iter().map(|&i| data[i].clone()).collect();
    let logged = trace.final_val_mse.unwrap();
    assert!(reconstruction_mse(&m, &val).unwrap() <= logged * 1.1);

    let post = m.encode(&val).unwrap();
    let z = sample_latent(&post.mu, &post.logvar, 3).unwrap();
    let n = val.len() as f64;
    for j in 0..m.latent_dim() {
        let mu_mean = post.mu.iter().map(|r| r[j]).sum::<f64>() / n;
        assert!(mu_mean.abs() < 0.2, "coordinate {j}: mean of mu {mu_mean}");
        let mean = z.iter().map(|r| r[j]).sum::<f64>() / n;
        let sd = (z.iter().map(|r| (r[j] - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        assert!(mean.abs() < 0.25 && (0.6..=1.4).contains(&sd), "coordinate {j}: mean {mean}, sd {sd}");
    }
}
