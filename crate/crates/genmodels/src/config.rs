use resgen_nn::{Activation, LayerSpec, Padding};
use serde::{Deserialize, Serialize};

use crate::error::GenError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Dcgan,
    Dcvae,
    Vaegan,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Dcgan, ModelKind::Dcvae, ModelKind::Vaegan];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Dcgan => "dcgan",
            ModelKind::Dcvae => "dcvae",
            ModelKind::Vaegan => "vaegan",
        }
    }

    pub fn has_encoder(self) -> bool {
        self != ModelKind::Dcgan
    }

    pub fn has_discriminator(self) -> bool {
        self != ModelKind::Dcvae
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = GenError;

    fn from_str(s: &str) -> Result<Self, GenError> {
        ModelKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| GenError::Config(format!("unknown model kind {s:?}")))
    }
}

/// Loss weights. Unset entries take the per-kind defaults.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LossWeights {
    /// KL weight.
    pub beta: Option<f64>,
    /// Perceptual (classifier feature) weight.
    pub gamma: Option<f64>,
    pub l1: Option<f64>,
    pub l2: Option<f64>,
    /// R1 gradient penalty coefficient on real batches.
    pub r1: Option<f64>,
    /// Weight of the adversarial term in the VAE-GAN decoder loss.
    pub adversarial: Option<f64>,
}

/// Weights with every default applied.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedWeights {
    pub beta: f64,
    pub gamma: f64,
    pub l1: f64,
    pub l2: f64,
    pub r1: f64,
    pub adversarial: f64,
}

impl LossWeights {
    pub fn resolve(&self, kind: ModelKind) -> ResolvedWeights {
        let (beta, r1) = match kind {
            ModelKind::Dcgan => (0.0, 10.0),
            ModelKind::Dcvae => (0.0075, 0.0),
            // Spectral normalization already bounds the discriminator.
            ModelKind::Vaegan => (0.2, 0.0),
        };
        ResolvedWeights {
            beta: self.beta.unwrap_or(beta),
            gamma: self.gamma.unwrap_or(0.1),
            l1: self.l1.unwrap_or(1.0),
            l2: self.l2.unwrap_or(1.0),
            r1: self.r1.unwrap_or(r1),
            adversarial: self.adversarial.unwrap_or(1.0),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    /// Adam step for encoder and decoder.
    pub learning_rate: f64,
    /// Adam step for generator and discriminator, which use β1 = 0.5.
    pub adversarial_learning_rate: f64,
    pub validation_fraction: f64,
    /// Early stopping: stagnant validation epochs (or FRD checks) tolerated.
    pub patience: usize,
    pub min_delta: f64,
    /// Stagnant epochs before the learning rate is scaled by `lr_factor`.
    pub lr_patience: usize,
    pub lr_factor: f64,
    pub min_learning_rate: f64,
    /// Generated samples per FRD check.
    pub frd_samples: usize,
    pub clip_norm: Option<f64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 40,
            batch_size: 32,
            learning_rate: 1e-3,
            adversarial_learning_rate: 2e-4,
            validation_fraction: 0.1,
            patience: 20,
            min_delta: 5e-4,
            lr_patience: 5,
            lr_factor: 0.5,
            min_learning_rate: 1e-6,
            frd_samples: 256,
            clip_norm: Some(100.0),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), GenError> {
        let bad = |m: &str| Err(GenError::Config(m.to_string()));
        if self.batch_size < 2 {
            return bad("batch_size must be at least 2");
        }
        if !(self.learning_rate > 0.0) || !(self.adversarial_learning_rate > 0.0) {
            return bad("learning rates must be positive");
        }
        if !(0.0..1.0).contains(&self.validation_fraction) {
            return bad("validation_fraction must lie in [0, 1)");
        }
        if !(self.lr_factor > 0.0 && self.lr_factor <= 1.0) {
            return bad("lr_factor must lie in (0, 1]");
        }
        if !(self.min_delta >= 0.0) {
            return bad("min_delta must be non-negative");
        }
        Ok(())
    }
}

/// Everything needed to build and train one generative model.
///
/// Layer stacks default to the reference layouts with filter counts multiplied
/// by `width_scale`; any of them can be given verbatim instead. A custom
/// encoder omits the final head, which is always a linear dense layer of
/// `2 * latent_dim` units holding the mean and log-variance.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub kind: ModelKind,
    #[serde(default = "default_latent")]
    pub latent_dim: usize,
    #[serde(default = "default_width")]
    pub width_scale: f64,
    #[serde(default)]
    pub encoder: Option<Vec<LayerSpec>>,
    #[serde(default)]
    pub decoder: Option<Vec<LayerSpec>>,
    #[serde(default)]
    pub discriminator: Option<Vec<LayerSpec>>,
    #[serde(default)]
    pub loss: LossWeights,
    #[serde(default)]
    pub train: TrainConfig,
}

fn default_latent() -> usize {
    32
}

fn default_width() -> f64 {
    0.25
}

/// The layer stacks of one model for a given input shape.
#[derive(Clone, Debug, PartialEq)]
pub struct Architecture {
    pub encoder: Option<Vec<LayerSpec>>,
    pub decoder: Vec<LayerSpec>,
    pub discriminator: Option<Vec<LayerSpec>>,
}

const LEAKY: Activation = Activation::LeakyRelu(0.2);

impl ModelConfig {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            latent_dim: default_latent(),
            width_scale: default_width(),
            encoder: None,
            decoder: None,
            discriminator: None,
            loss: LossWeights::default(),
            train: TrainConfig::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, GenError> {
        let cfg: Self = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn weights(&self) -> ResolvedWeights {
        self.loss.resolve(self.kind)
    }

    pub fn validate(&self) -> Result<(), GenError> {
        if self.latent_dim == 0 {
            return Err(GenError::Config("latent_dim must be positive".into()));
        }
        if !(self.width_scale > 0.0) {
            return Err(GenError::Config("width_scale must be positive".into()));
        }
        let w = self.weights();
        for (name, v) in [
            ("beta", w.beta),
            ("gamma", w.gamma),
            ("l1", w.l1),
            ("l2", w.l2),
            ("r1", w.r1),
            ("adversarial", w.adversarial),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(GenError::Config(format!("loss weight {name} must be finite and non-negative")));
            }
        }
        if self.kind.has_encoder() && !(w.beta > 0.0) {
            return Err(GenError::Config("beta must be positive for VAE models".into()));
        }
        if self.kind == ModelKind::Dcgan && self.encoder.is_some() {
            return Err(GenError::Config("dcgan has no encoder".into()));
        }
        if self.kind == ModelKind::Dcvae && self.discriminator.is_some() {
            return Err(GenError::Config("dcvae has no discriminator".into()));
        }
        self.train.validate()
    }

    fn filters(&self, reference: usize) -> usize {
        ((reference as f64 * self.width_scale).round() as usize).max(1)
    }

    /// Layer stacks for fields of shape `[channels, height, width]`.
    pub fn architecture(&self, input: [usize; 3]) -> Architecture {
        let [c, h, w] = input;
        let encoder = self.kind.has_encoder().then(|| {
            let mut body = self.encoder.clone().unwrap_or_else(|| match self.kind {
                ModelKind::Vaegan => self.vaegan_encoder(),
                _ => self.dcvae_encoder(),
            });
            body.push(LayerSpec::Dense {
                units: 2 * self.latent_dim,
                activation: Activation::Linear,
                spectral_norm: false,
            });
            body
        });
        let decoder = self.decoder.clone().unwrap_or_else(|| match self.kind {
            ModelKind::Dcgan => self.dcgan_generator(c, h, w),
            ModelKind::Dcvae => self.dcvae_decoder(c, h, w),
            ModelKind::Vaegan => self.vaegan_decoder(c, h, w),
        });
        let discriminator = self.kind.has_discriminator().then(|| {
            self.discriminator.clone().unwrap_or_else(|| match self.kind {
                ModelKind::Vaegan => self.vaegan_discriminator(),
                _ => self.dcgan_discriminator(),
            })
        });
        Architecture {
            encoder,
            decoder,
            discriminator,
        }
    }

    fn dcgan_generator(&self, c: usize, h: usize, w: usize) -> Vec<LayerSpec> {
        let (h0, w0) = (h.div_ceil(16), w.div_ceil(16));
        let top = self.filters(512);
        let mut l = vec![
            dense(h0 * w0 * top, Activation::Linear),
            LayerSpec::Reshape { shape: vec![top, h0, w0] },
            LayerSpec::BatchNorm {},
            act(Activation::Relu),
            conv(top, 3, 1, Activation::Linear),
            LayerSpec::BatchNorm {},
            act(Activation::Relu),
        ];
        for f in [256, 128, 64] {
            l.push(up(self.filters(f), 3, Activation::Linear));
            l.push(LayerSpec::BatchNorm {});
            l.push(act(Activation::Relu));
        }
        l.push(up(self.filters(32), 3, Activation::Relu));
        l.push(conv(self.filters(16), 3, 1, Activation::Relu));
        l.push(conv(c, 1, 1, Activation::Tanh));
        fit_output(&mut l, h0 * 16, w0 * 16, h, w);
        l
    }

    fn dcgan_discriminator(&self) -> Vec<LayerSpec> {
        let mut l = vec![conv(self.filters(64), 1, 1, LEAKY), conv(self.filters(128), 3, 1, LEAKY)];
        for f in [256, 512, 512, 1024] {
            l.push(LayerSpec::AvgPool { size: 2 });
            l.push(conv(self.filters(f), 3, 1, LEAKY));
        }
        l.push(LayerSpec::GlobalAvgPool {});
        l.push(dense(1, Activation::Linear));
        l
    }

    fn dcvae_encoder(&self) -> Vec<LayerSpec> {
        let mut l = Vec::new();
        for f in [32, 64, 128, 256] {
            l.push(conv(self.filters(f), 3, 2, LEAKY));
            l.push(LayerSpec::BatchNorm {});
        }
        l.push(LayerSpec::Dropout { rate: 0.4 });
        l.push(LayerSpec::Flatten {});
        l.push(dense(self.filters(256), LEAKY));
        l.push(LayerSpec::Dropout { rate: 0.3 });
        l
    }

    fn dcvae_decoder(&self, c: usize, h: usize, w: usize) -> Vec<LayerSpec> {
        let (h0, w0) = (h.div_ceil(8), w.div_ceil(8));
        let top = self.filters(256);
        let mut l = vec![
            dense(h0 * w0 * top, LEAKY),
            LayerSpec::Dropout { rate: 0.2 },
            LayerSpec::Reshape { shape: vec![top, h0, w0] },
        ];
        for f in [128, 64, 32] {
            l.push(up(self.filters(f), 3, LEAKY));
            l.push(LayerSpec::BatchNorm {});
        }
        fit_output(&mut l, h0 * 8, w0 * 8, h, w);
        l.push(conv(c, 3, 1, Activation::Tanh));
        l
    }

    fn vaegan_encoder(&self) -> Vec<LayerSpec> {
        let mut l = Vec::new();
        for f in [58, 116, 230] {
            l.push(conv(self.filters(f), 5, 2, LEAKY));
            l.push(LayerSpec::BatchNorm {});
        }
        l.push(LayerSpec::Flatten {});
        l.push(dense(self.filters(922), LEAKY));
        l.push(LayerSpec::Dropout { rate: 0.3 });
        l
    }

    fn vaegan_decoder(&self, c: usize, h: usize, w: usize) -> Vec<LayerSpec> {
        let (h0, w0) = (h.div_ceil(8), w.div_ceil(8));
        let top = self.filters(230);
        let mut l = vec![
            dense(h0 * w0 * top, LEAKY),
            LayerSpec::Reshape { shape: vec![top, h0, w0] },
        ];
        for f in [230, 116, 58] {
            l.push(up(self.filters(f), 5, LEAKY));
            l.push(LayerSpec::BatchNorm {});
        }
        fit_output(&mut l, h0 * 8, w0 * 8, h, w);
        l.push(LayerSpec::Conv2dTranspose {
            filters: c,
            kernel: 5,
            stride: 1,
            padding: Padding::Same,
            output_shape: None,
            activation: Activation::Tanh,
            spectral_norm: false,
        });
        l
    }

    fn vaegan_discriminator(&self) -> Vec<LayerSpec> {
        let mut l = vec![LayerSpec::GaussianNoise { std: 0.1 }];
        for f in [58, 116, 230] {
            l.push(LayerSpec::Conv2d {
                filters: self.filters(f),
                kernel: 5,
                stride: 2,
                padding: Padding::Same,
                activation: LEAKY,
                spectral_norm: true,
            });
            l.push(LayerSpec::Dropout { rate: 0.3 });
        }
        l.push(LayerSpec::Flatten {});
        l.push(dense(1, Activation::Linear));
        l
    }
}

fn fit_output(l: &mut Vec<LayerSpec>, h_got: usize, w_got: usize, h: usize, w: usize) {
    if (h_got, w_got) != (h, w) {
        l.push(LayerSpec::Resize { height: h, width: w });
    }
}

fn dense(units: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Dense {
        units,
        activation,
        spectral_norm: false,
    }
}

fn act(activation: Activation) -> LayerSpec {
    LayerSpec::Activation { activation }
}

fn conv(filters: usize, kernel: usize, stride: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Conv2d {
        filters,
        kernel,
        stride,
        padding: Padding::Same,
        activation,
        spectral_norm: false,
    }
}

fn up(filters: usize, kernel: usize, activation: Activation) -> LayerSpec {
    LayerSpec::Conv2dTranspose {
        filters,
        kernel,
        stride: 2,
        padding: Padding::Same,
        output_shape: None,
        activation,
        spectral_norm: false,
    }
}
