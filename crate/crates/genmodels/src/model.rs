use std::fs;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use resgen_nn::io::{load_network, save_network};
use resgen_nn::{Network, Tensor};
use serde::{Deserialize, Serialize};

use crate::config::{ModelConfig, ModelKind, ResolvedWeights};
use crate::error::GenError;

const BATCH: usize = 128;
const MANIFEST: &str = "model.json";

/// Encoder output for a batch: one mean and log-variance vector per sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Posterior {
    pub mu: Vec<Vec<f64>>,
    pub logvar: Vec<Vec<f64>>,
}

/// Where the training fields came from, stored with the weights.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// Log-permeability bounds mapped to [−1, 1].
    pub normalization: Option<[f64; 2]>,
    pub dataset_fingerprint: Option<String>,
}

#[derive(Serialize, Deserialize)]
struct BundleManifest {
    kind: ModelKind,
    latent_dim: usize,
    input_shape: [usize; 3],
    weights: ResolvedWeights,
    provenance: Provenance,
    config: ModelConfig,
}

/// A generator (or decoder) with its optional encoder and discriminator.
#[derive(Clone, Debug)]
pub struct GenerativeModel {
    pub config: ModelConfig,
    pub input_shape: [usize; 3],
    pub encoder: Option<Network>,
    pub decoder: Network,
    pub discriminator: Option<Network>,
    pub provenance: Provenance,
}

impl GenerativeModel {
    /// Builds untrained networks for fields of shape `[channels, height, width]`.
    pub fn new(config: ModelConfig, input_shape: [usize; 3], seed: u64) -> Result<Self, GenError> {
        config.validate()?;
        let arch = config.architecture(input_shape);
        let encoder = arch
            .encoder
            .map(|l| Network::new(&input_shape, l, seed.wrapping_add(1)))
            .transpose()?;
        let decoder = Network::new(&[config.latent_dim], arch.decoder, seed.wrapping_add(2))?;
        let discriminator = arch
            .discriminator
            .map(|l| Network::new(&input_shape, l, seed.wrapping_add(3)))
            .transpose()?;
        let model = Self {
            config,
            input_shape,
            encoder,
            decoder,
            discriminator,
            provenance: Provenance::default(),
        };
        model.check_shapes()?;
        Ok(model)
    }

    fn check_shapes(&self) -> Result<(), GenError> {
        if self.decoder.output_shape() != self.input_shape {
            return Err(GenError::Config(format!(
                "decoder produces {:?}, fields are {:?}",
                self.decoder.output_shape(),
                self.input_shape
            )));
        }
        if let Some(e) = &self.encoder {
            if e.output_shape() != [2 * self.config.latent_dim] {
                return Err(GenError::Config(format!(
                    "encoder produces {:?}, expected [{}]",
                    e.output_shape(),
                    2 * self.config.latent_dim
                )));
            }
        }
        if let Some(d) = &self.discriminator {
            if d.output_shape() != [1] {
                return Err(GenError::Config(format!(
                    "discriminator produces {:?}, expected [1]",
                    d.output_shape()
                )));
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.config.kind
    }

    pub fn latent_dim(&self) -> usize {
        self.config.latent_dim
    }

    pub fn field_len(&self) -> usize {
        self.input_shape.iter().product()
    }

    /// Stacks fields into a `[n, C, H, W]` tensor.
    pub fn batch_tensor(&self, fields: &[&[f32]]) -> Result<Tensor, GenError> {
        let n = self.field_len();
        let mut data = Vec::with_capacity(fields.len() * n);
        for f in fields {
            if f.len() != n {
                return Err(GenError::FieldSize {
                    expected: n,
                    got: f.len(),
                });
            }
            data.extend_from_slice(f);
        }
        let [c, h, w] = self.input_shape;
        Ok(Tensor::new(&[fields.len(), c, h, w], data)?)
    }

    /// Posterior mean and log-variance of each field, in inference mode.
    pub fn encode(&self, fields: &[Vec<f32>]) -> Result<Posterior, GenError> {
        let enc = self.encoder.as_ref().ok_or(GenError::NoEncoder)?;
        let l = self.latent_dim();
        let mut out = Posterior {
            mu: Vec::with_capacity(fields.len()),
            logvar: Vec::with_capacity(fields.len()),
        };
        for chunk in fields.chunks(BATCH) {
            let refs: Vec<&[f32]> = chunk.iter().map(Vec::as_slice).collect();
            let y = enc.predict(&self.batch_tensor(&refs)?)?;
            for row in y.data().chunks(2 * l) {
                out.mu.push(row[..l].iter().map(|&v| f64::from(v)).collect());
                out.logvar.push(row[l..].iter().map(|&v| f64::from(v)).collect());
            }
        }
        Ok(out)
    }

    /// Normalized fields for latent vectors, in inference mode.
    pub fn decode(&self, z: &[Vec<f64>]) -> Result<Vec<Vec<f32>>, GenError> {
        let l = self.latent_dim();
        let n = self.field_len();
        let mut out = Vec::with_capacity(z.len());
        for chunk in z.chunks(BATCH) {
            let mut data = Vec::with_capacity(chunk.len() * l);
            for v in chunk {
                if v.len() != l {
                    return Err(GenError::LatentDim {
                        expected: l,
                        got: v.len(),
                    });
                }
                data.extend(v.iter().map(|&x| x as f32));
            }
            let y = self.decoder.predict(&Tensor::new(&[chunk.len(), l], data)?)?;
            out.extend(y.data().chunks(n).map(<[f32]>::to_vec));
        }
        Ok(out)
    }

    /// Decodes `count` draws from the latent prior.
    pub fn generate(&self, count: usize, seed: u64) -> Result<Vec<Vec<f32>>, GenError> {
        self.decode(&sample_prior(count, self.latent_dim(), seed))
    }

    /// Writes the networks and a manifest into `dir`, removing component
    /// directories left over from a model of another kind.
    pub fn save(&self, dir: &Path) -> Result<(), GenError> {
        fs::create_dir_all(dir)?;
        for (name, present) in [("encoder", self.encoder.is_some()), ("discriminator", self.discriminator.is_some())] {
            let path = dir.join(name);
            if !present && path.exists() {
                fs::remove_dir_all(&path)?;
            }
        }
        let meta = serde_json::json!({ "kind": self.kind().name() });
        save_network(&self.decoder, &dir.join("decoder"), meta.clone())?;
        if let Some(e) = &self.encoder {
            save_network(e, &dir.join("encoder"), meta.clone())?;
        }
        if let Some(d) = &self.discriminator {
            save_network(d, &dir.join("discriminator"), meta)?;
        }
        let manifest = BundleManifest {
            kind: self.kind(),
            latent_dim: self.latent_dim(),
            input_shape: self.input_shape,
            weights: self.config.weights(),
            provenance: self.provenance.clone(),
            config: self.config.clone(),
        };
        fs::write(dir.join(MANIFEST), serde_json::to_string_pretty(&manifest)?)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, GenError> {
        let manifest: BundleManifest = serde_json::from_str(&fs::read_to_string(dir.join(MANIFEST))?)?;
        if manifest.config.kind != manifest.kind || manifest.config.latent_dim != manifest.latent_dim {
            return Err(GenError::Bundle("manifest disagrees with its config".into()));
        }
        let load = |name: &str, present: bool| -> Result<Option<Network>, GenError> {
            let path = dir.join(name);
            match (present, path.exists()) {
                (true, true) => Ok(Some(load_network(&path)?.0)),
                (false, false) => Ok(None),
                (true, false) => Err(GenError::Bundle(format!("{} lacks {name}", manifest.kind))),
                (false, true) => Err(GenError::Bundle(format!("{} cannot have {name}", manifest.kind))),
            }
        };
        let encoder = load("encoder", manifest.kind.has_encoder())?;
        let discriminator = load("discriminator", manifest.kind.has_discriminator())?;
        let decoder = load("decoder", true)?.expect("decoder is required");
        let model = Self {
            config: manifest.config,
            input_shape: manifest.input_shape,
            encoder,
            decoder,
            discriminator,
            provenance: manifest.provenance,
        };
        model.check_shapes()?;
        Ok(model)
    }
}

/// `z = mu + exp(logvar / 2) * eps` with `eps` drawn from `seed`. A log-variance
/// of negative infinity gives `z = mu`.
pub fn sample_latent(mu: &[Vec<f64>], logvar: &[Vec<f64>], seed: u64) -> Result<Vec<Vec<f64>>, GenError> {
    if mu.len() != logvar.len() {
        return Err(GenError::LatentDim {
            expected: mu.len(),
            got: logvar.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    mu.iter()
        .zip(logvar)
        .map(|(m, lv)| {
            if m.len() != lv.len() {
                return Err(GenError::LatentDim {
                    expected: m.len(),
                    got: lv.len(),
                });
            }
            Ok(m.iter()
                .zip(lv)
                .map(|(&m, &lv)| {
                    let eps: f64 = StandardNormal.sample(&mut rng);
                    let sigma = (0.5 * lv).exp();
                    if sigma == 0.0 {
                        m
                    } else {
                        m + sigma * eps
                    }
                })
                .collect())
        })
        .collect()
}

/// `count` standard-normal latent vectors.
pub fn sample_prior(count: usize, dim: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..count)
        .map(|_| (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect())
        .collect()
}

/// Nearest facies level for each normalized cell. Ties go to the class with
/// the lower level.
pub fn facies_decode(values: &[f32], levels: &[f64]) -> Vec<usize> {
    values
        .iter()
        .map(|&v| {
            let v = f64::from(v);
            let mut best = 0;
            for (k, &level) in levels.iter().enumerate().skip(1) {
                let (d, db) = ((v - level).abs(), (v - levels[best]).abs());
                if d < db || (d == db && level < levels[best]) {
                    best = k;
                }
            }
            best
        })
        .collect()
}
