use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use resgen_metrics::{frechet_distance, FeatureModel};
use resgen_nn::{fork_rng, Adam, ForwardCtx, Graph, Network, Param, Tensor, Var};
use serde::{Deserialize, Serialize};

use crate::config::{ModelKind, ResolvedWeights, TrainConfig};
use crate::error::GenError;
use crate::losses::{elbo_loss, gan_losses, generator_loss, r1_penalty, reparameterize, vaegan_total_loss};
use crate::model::GenerativeModel;

/// Losses of one epoch. Training losses are batch means; unused terms are 0.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub recon: f64,
    pub kl: f64,
    pub generator: f64,
    pub discriminator: f64,
    pub total: f64,
    pub val_mse: Option<f64>,
    pub val_loss: Option<f64>,
    pub frd: Option<f64>,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainingTrace {
    pub records: Vec<EpochRecord>,
    /// Epoch whose weights were kept; `None` keeps the last epoch.
    pub best_epoch: Option<usize>,
    pub stopped_early: bool,
    /// Validation MSE of the returned weights.
    pub final_val_mse: Option<f64>,
    pub train_samples: usize,
    pub val_samples: usize,
}

impl TrainingTrace {
    pub fn columns() -> [&'static str; 10] {
        [
            "epoch",
            "recon",
            "kl",
            "generator",
            "discriminator",
            "total",
            "val_mse",
            "val_loss",
            "frd",
            "learning_rate",
        ]
    }

    pub fn to_csv(&self) -> String {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let mut s = Self::columns().join(",");
        s.push('\n');
        for r in &self.records {
            s.push_str(&format!(
                "{},{},{},{},{},{},{},{},{},{}\n",
                r.epoch,
                r.recon,
                r.kl,
                r.generator,
                r.discriminator,
                r.total,
                opt(r.val_mse),
                opt(r.val_loss),
                opt(r.frd),
                r.learning_rate
            ));
        }
        s
    }
}

/// Deterministic split of `n` sample indices into training and validation.
pub fn split_validation(n: usize, fraction: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = ((n as f64) * fraction).round() as usize;
    let n_val = n_val.min(n.saturating_sub(2));
    let val = idx.split_off(n - n_val);
    (idx, val)
}

#[derive(Default)]
struct Sums {
    recon: f64,
    kl: f64,
    generator: f64,
    discriminator: f64,
    total: f64,
    batches: usize,
}

struct Optimizers {
    encoder: Adam,
    decoder: Adam,
    discriminator: Adam,
}

struct Snapshot {
    encoder: Option<Network>,
    decoder: Network,
    discriminator: Option<Network>,
}

struct Validation {
    mse: Option<f64>,
    loss: Option<f64>,
    frd: Option<f64>,
}

/// Trains `model` on normalized fields and returns the per-epoch trace. The
/// best weights by validation loss (VAE family) or FRD (DCGAN, when a critic
/// is given) are restored at the end.
///
/// `critic` supplies perceptual features for the VAE-GAN and the FRD check
/// for the DCGAN.
pub fn train(
    model: &mut GenerativeModel,
    fields: &[Vec<f32>],
    critic: Option<&FeatureModel>,
    seed: u64,
) -> Result<TrainingTrace, GenError> {
    let cfg = model.config.train.clone();
    cfg.validate()?;
    let w = model.config.weights();
    for f in fields {
        if f.len() != model.field_len() {
            return Err(GenError::FieldSize {
                expected: model.field_len(),
                got: f.len(),
            });
        }
    }
    let (train_idx, val_idx) = split_validation(fields.len(), cfg.validation_fraction, seed);
    let val: Vec<Vec<f32>> = val_idx.iter().map(|&i| fields[i].clone()).collect();
    let mut trace = TrainingTrace {
        train_samples: train_idx.len(),
        val_samples: val.len(),
        ..Default::default()
    };
    if cfg.epochs == 0 {
        return Ok(trace);
    }
    if train_idx.len() < 2 {
        return Err(GenError::Config("need at least two training samples".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7472_6169_6e00);
    let plain = |lr: f64| {
        let mut a = Adam::new(lr);
        a.clip_norm = cfg.clip_norm;
        a
    };
    let adversarial = |lr: f64| {
        let mut a = plain(lr);
        a.beta1 = 0.5;
        a
    };
    let mut opt = match model.kind() {
        ModelKind::Dcgan => Optimizers {
            encoder: plain(cfg.learning_rate),
            decoder: adversarial(cfg.adversarial_learning_rate),
            discriminator: adversarial(cfg.adversarial_learning_rate),
        },
        _ => Optimizers {
            encoder: plain(cfg.learning_rate),
            decoder: plain(cfg.learning_rate),
            discriminator: adversarial(cfg.adversarial_learning_rate),
        },
    };
    let monitored = model.kind() != ModelKind::Dcgan || critic.is_some();
    let mut best = f64::INFINITY;
    let mut best_snapshot: Option<(usize, Snapshot)> = None;
    let (mut stagnant, mut lr_stagnant) = (0usize, 0usize);
    let mut order = train_idx.clone();

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut sums = Sums::default();
        for chunk in order.chunks(cfg.batch_size) {
            if chunk.len() < 2 {
                continue;
            }
            let refs: Vec<&[f32]> = chunk.iter().map(|&i| fields[i].as_slice()).collect();
            let x = model.batch_tensor(&refs)?;
            let mut step_rng = fork_rng(&mut rng);
            match model.kind() {
                ModelKind::Dcvae => dcvae_step(model, &mut opt, x, &w, epoch, &mut sums, &mut step_rng)?,
                ModelKind::Dcgan => dcgan_step(model, &mut opt, x, &w, epoch, &mut sums, &mut step_rng)?,
                ModelKind::Vaegan => {
                    vaegan_step(model, &mut opt, x, &w, critic, epoch, &mut sums, &mut step_rng)?
                }
            }
        }
        let b = sums.batches.max(1) as f64;
        let v = validate(model, &val, &w, critic, &cfg, seed.wrapping_add(epoch as u64))?;
        let lr = match model.kind() {
            ModelKind::Dcgan => opt.decoder.lr,
            _ => opt.encoder.lr,
        };
        let record = EpochRecord {
            epoch,
            recon: sums.recon / b,
            kl: sums.kl / b,
            generator: sums.generator / b,
            discriminator: sums.discriminator / b,
            total: sums.total / b,
            val_mse: v.mse,
            val_loss: v.loss,
            frd: v.frd,
            learning_rate: lr,
        };
        for (name, value) in [
            ("validation loss", record.val_loss),
            ("validation mse", record.val_mse),
            ("frd", record.frd),
        ] {
            if value.is_some_and(|x| !x.is_finite()) {
                return Err(GenError::NonFinite {
                    epoch,
                    component: name.into(),
                });
            }
        }
        trace.records.push(record);

        let metric = match model.kind() {
            ModelKind::Dcgan => v.frd,
            _ => v.loss,
        };
        let Some(metric) = metric.filter(|_| monitored) else {
            continue;
        };
        if metric < best - cfg.min_delta {
            best = metric;
            stagnant = 0;
            lr_stagnant = 0;
            best_snapshot = Some((
                epoch,
                Snapshot {
                    encoder: model.encoder.clone(),
                    decoder: model.decoder.clone(),
                    discriminator: model.discriminator.clone(),
                },
            ));
        } else {
            stagnant += 1;
            lr_stagnant += 1;
        }
        if model.kind() != ModelKind::Dcgan && lr_stagnant >= cfg.lr_patience {
            for a in [&mut opt.encoder, &mut opt.decoder] {
                a.lr = (a.lr * cfg.lr_factor).max(cfg.min_learning_rate);
            }
            lr_stagnant = 0;
        }
        if stagnant >= cfg.patience {
            trace.stopped_early = true;
            break;
        }
    }

    if let Some((epoch, snap)) = best_snapshot {
        model.encoder = snap.encoder;
        model.decoder = snap.decoder;
        model.discriminator = snap.discriminator;
        trace.best_epoch = Some(epoch);
    }
    if model.kind().has_encoder() && !val.is_empty() {
        trace.final_val_mse = Some(reconstruction_mse(model, &val)?);
    }
    Ok(trace)
}

fn check(epoch: usize, component: &str, value: f64) -> Result<f64, GenError> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(GenError::NonFinite {
            epoch,
            component: component.into(),
        })
    }
}

fn scalar(g: &Graph<f32>, v: Var) -> f64 {
    f64::from(g.value(v).data()[0])
}

fn apply(
    opt: &mut Adam,
    params: &mut [Param],
    grads: &[Tensor],
    epoch: usize,
    component: &str,
) -> Result<(), GenError> {
    opt.step(params, grads).map_err(|e| match e {
        resgen_nn::NnError::NonFiniteGradient(p) => GenError::NonFinite {
            epoch,
            component: format!("{component} gradient ({p})"),
        },
        other => other.into(),
    })
}

fn train_ctx(rng: &mut ChaCha8Rng, update_state: bool) -> ForwardCtx<'_> {
    ForwardCtx {
        training: true,
        update_state,
        rng,
    }
}

/// Runs the encoder and splits its output into mean and log-variance.
fn encode_graph(
    enc: &mut Network,
    g: &mut Graph<f32>,
    params: &[Var],
    x: Var,
    latent: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Var, Var), GenError> {
    let h = enc.forward_mut(g, params, x, &mut train_ctx(rng, true))?;
    let mu = g.slice_cols(h, 0, latent)?;
    let logvar = g.slice_cols(h, latent, 2 * latent)?;
    Ok((mu, logvar))
}

fn dcvae_step(
    model: &mut GenerativeModel,
    opt: &mut Optimizers,
    x: Tensor,
    w: &ResolvedWeights,
    epoch: usize,
    sums: &mut Sums,
    rng: &mut ChaCha8Rng,
) -> Result<(), GenError> {
    let latent = model.latent_dim();
    let batch = x.batch();
    let enc = model.encoder.as_mut().ok_or(GenError::NoEncoder)?;
    let mut g = Graph::new();
    let ep = enc.bind(&mut g);
    let dp = model.decoder.bind(&mut g);
    let xv = g.input(x);
    let (mu, logvar) = encode_graph(enc, &mut g, &ep, xv, latent, rng)?;
    let eps = Tensor::randn(&[batch, latent], 1.0, rng);
    let z = reparameterize(&mut g, mu, logvar, eps)?;
    let x_hat = model.decoder.forward_mut(&mut g, &dp, z, &mut train_ctx(rng, true))?;
    let terms = elbo_loss(&mut g, xv, x_hat, mu, logvar, w.beta)?;
    let recon = check(epoch, "reconstruction loss", scalar(&g, terms.recon))?;
    let kl = check(epoch, "kl loss", scalar(&g, terms.kl))?;
    let total = check(epoch, "total loss", scalar(&g, terms.total))?;
    let mut wrt = ep.clone();
    wrt.extend_from_slice(&dp);
    let grads = g.backward(terms.total, &wrt)?;
    let (ge, gd) = grads.split_at(ep.len());
    apply(&mut opt.encoder, enc.params_mut(), ge, epoch, "encoder")?;
    apply(&mut opt.decoder, model.decoder.params_mut(), gd, epoch, "decoder")?;
    sums.recon += recon;
    sums.kl += kl;
    sums.total += total;
    sums.batches += 1;
    Ok(())
}

/// One discriminator update on `real` against detached `fake`.
fn discriminator_step(
    disc: &mut Network,
    opt: &mut Adam,
    real: Tensor,
    fake: Tensor,
    r1: f64,
    epoch: usize,
    rng: &mut ChaCha8Rng,
) -> Result<f64, GenError> {
    let mut g = Graph::new();
    let dp = disc.bind(&mut g);
    let rv = g.input(real);
    let fv = g.input(fake);
    let d_real = disc.forward_mut(&mut g, &dp, rv, &mut train_ctx(rng, true))?;
    let d_fake = disc.forward(&mut g, &dp, fv, &mut train_ctx(rng, false))?;
    let terms = gan_losses(&mut g, d_real, d_fake)?;
    let mut loss = terms.discriminator;
    if r1 > 0.0 {
        let pen = r1_penalty(&mut g, rv, d_real, r1)?;
        loss = g.add(loss, pen)?;
    }
    let value = check(epoch, "discriminator loss", scalar(&g, loss))?;
    let grads = g.backward(loss, &dp)?;
    apply(opt, disc.params_mut(), &grads, epoch, "discriminator")?;
    Ok(value)
}

fn dcgan_step(
    model: &mut GenerativeModel,
    opt: &mut Optimizers,
    x: Tensor,
    w: &ResolvedWeights,
    epoch: usize,
    sums: &mut Sums,
    rng: &mut ChaCha8Rng,
) -> Result<(), GenError> {
    let latent = model.latent_dim();
    let batch = x.batch();
    let disc = model.discriminator.as_mut().ok_or_else(|| GenError::Config("dcgan needs a discriminator".into()))?;

    let fake = {
        let mut g = Graph::new();
        let gp = model.decoder.bind(&mut g);
        let z = g.input(Tensor::randn(&[batch, latent], 1.0, rng));
        let y = model.decoder.forward(&mut g, &gp, z, &mut train_ctx(rng, false))?;
        g.value(y).clone()
    };
    let d_loss = discriminator_step(disc, &mut opt.discriminator, x, fake, w.r1, epoch, rng)?;

    let mut g = Graph::new();
    let gp = model.decoder.bind(&mut g);
    let dp = disc.bind(&mut g);
    let z = g.input(Tensor::randn(&[batch, latent], 1.0, rng));
    let fake = model.decoder.forward_mut(&mut g, &gp, z, &mut train_ctx(rng, true))?;
    let logits = disc.forward(&mut g, &dp, fake, &mut train_ctx(rng, false))?;
    let loss = generator_loss(&mut g, logits);
    let g_loss = check(epoch, "generator loss", scalar(&g, loss))?;
    let grads = g.backward(loss, &gp)?;
    apply(&mut opt.decoder, model.decoder.params_mut(), &grads, epoch, "generator")?;

    sums.generator += g_loss;
    sums.discriminator += d_loss;
    sums.total += g_loss + d_loss;
    sums.batches += 1;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn vaegan_step(
    model: &mut GenerativeModel,
    opt: &mut Optimizers,
    x: Tensor,
    w: &ResolvedWeights,
    critic: Option<&FeatureModel>,
    epoch: usize,
    sums: &mut Sums,
    rng: &mut ChaCha8Rng,
) -> Result<(), GenError> {
    let latent = model.latent_dim();
    let batch = x.batch();
    let enc = model.encoder.as_mut().ok_or(GenError::NoEncoder)?;
    let disc = model.discriminator.as_mut().ok_or_else(|| GenError::Config("vaegan needs a discriminator".into()))?;

    let mut g = Graph::new();
    let ep = enc.bind(&mut g);
    let dp = model.decoder.bind(&mut g);
    let sp = disc.bind(&mut g);
    let xv = g.input(x.clone());
    let (mu, logvar) = encode_graph(enc, &mut g, &ep, xv, latent, rng)?;
    let eps = Tensor::randn(&[batch, latent], 1.0, rng);
    let z = reparameterize(&mut g, mu, logvar, eps)?;
    let x_hat = model.decoder.forward_mut(&mut g, &dp, z, &mut train_ctx(rng, true))?;
    let logits = disc.forward(&mut g, &sp, x_hat, &mut train_ctx(rng, false))?;
    let features = match critic {
        Some(c) => {
            let cp = c.net.bind(&mut g);
            let mut eval_rng = ChaCha8Rng::seed_from_u64(0);
            let fx = c.net.forward_until(&mut g, &cp, xv, &mut ForwardCtx::eval(&mut eval_rng), c.feature_layer())?;
            let fh = c
                .net
                .forward_until(&mut g, &cp, x_hat, &mut ForwardCtx::eval(&mut eval_rng), c.feature_layer())?;
            Some((fx, fh))
        }
        None => None,
    };
    let terms = vaegan_total_loss(&mut g, xv, x_hat, mu, logvar, logits, features, w)?;
    let l1 = check(epoch, "l1 loss", scalar(&g, terms.l1))?;
    let l2 = check(epoch, "l2 loss", scalar(&g, terms.l2))?;
    let kl = check(epoch, "kl loss", scalar(&g, terms.kl))?;
    check(epoch, "perceptual loss", scalar(&g, terms.perceptual))?;
    let adv = check(epoch, "generator loss", scalar(&g, terms.adversarial))?;
    let total = check(epoch, "total loss", scalar(&g, terms.decoder_total))?;
    let fake = g.value(x_hat).clone();
    let ge = g.backward(terms.total, &ep)?;
    let gd = g.backward(terms.decoder_total, &dp)?;
    apply(&mut opt.encoder, enc.params_mut(), &ge, epoch, "encoder")?;
    apply(&mut opt.decoder, model.decoder.params_mut(), &gd, epoch, "decoder")?;
    drop(g);

    let d_loss = discriminator_step(disc, &mut opt.discriminator, x, fake, w.r1, epoch, rng)?;
    sums.recon += w.l1 * l1 + w.l2 * l2;
    sums.kl += kl;
    sums.generator += adv;
    sums.discriminator += d_loss;
    sums.total += total;
    sums.batches += 1;
    Ok(())
}

/// Mean squared error of `decode(encode(x).mu)` against `x`.
pub fn reconstruction_mse(model: &GenerativeModel, fields: &[Vec<f32>]) -> Result<f64, GenError> {
    let post = model.encode(fields)?;
    let recon = model.decode(&post.mu)?;
    Ok(mean_sq_diff(fields, &recon))
}

fn mean_sq_diff(a: &[Vec<f32>], b: &[Vec<f32>]) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for (x, y) in a.iter().zip(b) {
        for (p, q) in x.iter().zip(y) {
            let d = f64::from(*p) - f64::from(*q);
            s += d * d;
        }
        n += x.len();
    }
    s / n.max(1) as f64
}

fn validate(
    model: &GenerativeModel,
    val: &[Vec<f32>],
    w: &ResolvedWeights,
    critic: Option<&FeatureModel>,
    cfg: &TrainConfig,
    seed: u64,
) -> Result<Validation, GenError> {
    let mut out = Validation {
        mse: None,
        loss: None,
        frd: None,
    };
    if val.is_empty() {
        return Ok(out);
    }
    match model.kind() {
        ModelKind::Dcgan => {
            if let Some(c) = critic {
                let fake = model.generate(cfg.frd_samples.max(2), seed)?;
                out.frd = Some(frechet_distance(&c.features(&fake)?, &c.features(val)?)?);
            }
        }
        kind => {
            let post = model.encode(val)?;
            let recon = model.decode(&post.mu)?;
            let mse = mean_sq_diff(val, &recon);
            let kl = mean_kl(&post.mu, &post.logvar);
            out.mse = Some(mse);
            out.loss = Some(if kind == ModelKind::Dcvae {
                mse + w.beta * kl
            } else {
                let l1 = mean_abs_diff(val, &recon);
                let perceptual = match critic {
                    Some(c) => {
                        let (fa, fb) = (c.features(val)?, c.features(&recon)?);
                        let mut s = 0.0;
                        for (a, b) in fa.iter().zip(&fb) {
                            s += a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum::<f64>() / a.len() as f64;
                        }
                        s / fa.len() as f64
                    }
                    None => 0.0,
                };
                w.l1 * l1 + w.l2 * mse + w.beta * kl + w.gamma * perceptual
            });
        }
    }
    Ok(out)
}

fn mean_abs_diff(a: &[Vec<f32>], b: &[Vec<f32>]) -> f64 {
    let mut s = 0.0;
    let mut n = 0usize;
    for (x, y) in a.iter().zip(b) {
        s += x.iter().zip(y).map(|(p, q)| (f64::from(*p) - f64::from(*q)).abs()).sum::<f64>();
        n += x.len();
    }
    s / n.max(1) as f64
}

/// Closed-form KL to the standard normal, summed over coordinates and
/// averaged over samples.
pub fn mean_kl(mu: &[Vec<f64>], logvar: &[Vec<f64>]) -> f64 {
    let total: f64 = mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| {
            0.5 * m
                .iter()
                .zip(lv)
                .map(|(m, lv)| m * m + lv.exp() - 1.0 - lv)
                .sum::<f64>()
        })
        .sum();
    total / mu.len().max(1) as f64
}

