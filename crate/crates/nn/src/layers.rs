//! Layer specifications and the sequential [`Network`].

use std::fmt;
use std::rc::Rc;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Bernoulli, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::NnError;
use crate::graph::{Graph, Var};
use crate::kernels::ConvGeom;
use crate::real::Real;
use crate::spectral::{power_iteration, SIGMA_FLOOR};
use crate::tensor::Tensor;

pub const BATCH_NORM_EPS: f64 = 1e-3;
pub const BATCH_NORM_MOMENTUM: f64 = 0.99;
pub const DEFAULT_LEAKY_SLOPE: f64 = 0.2;

/// Pointwise nonlinearity. Written in config files as `linear`, `relu`,
/// `leaky-relu` (slope 0.2), `leaky-relu:<slope>`, `tanh` or `sigmoid`.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Activation {
    #[default]
    Linear,
    Relu,
    LeakyRelu(f64),
    Tanh,
    Sigmoid,
}

impl Activation {
    fn is_rectifier(self) -> bool {
        matches!(self, Activation::Relu | Activation::LeakyRelu(_))
    }

    pub fn apply<T: Real>(self, g: &mut Graph<T>, x: Var) -> Var {
        match self {
            Activation::Linear => x,
            Activation::Relu => g.relu(x),
            Activation::LeakyRelu(a) => g.leaky_relu(x, a),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Activation::Linear => f.write_str("linear"),
            Activation::Relu => f.write_str("relu"),
            Activation::LeakyRelu(a) if *a == DEFAULT_LEAKY_SLOPE => f.write_str("leaky-relu"),
            Activation::LeakyRelu(a) => write!(f, "leaky-relu:{a}"),
            Activation::Tanh => f.write_str("tanh"),
            Activation::Sigmoid => f.write_str("sigmoid"),
        }
    }
}

impl FromStr for Activation {
    type Err = NnError;

    fn from_str(s: &str) -> Result<Self, NnError> {
        let bad = || NnError::InvalidSpec(format!("unknown activation '{s}'"));
        Ok(match s {
            "linear" => Activation::Linear,
            "relu" => Activation::Relu,
            "leaky-relu" => Activation::LeakyRelu(DEFAULT_LEAKY_SLOPE),
            "tanh" => Activation::Tanh,
            "sigmoid" => Activation::Sigmoid,
            _ => {
                let slope = s.strip_prefix("leaky-relu:").ok_or_else(bad)?;
                Activation::LeakyRelu(slope.parse().map_err(|_| bad())?)
            }
        })
    }
}

impl TryFrom<String> for Activation {
    type Error = NnError;

    fn try_from(s: String) -> Result<Self, NnError> {
        s.parse()
    }
}

impl From<Activation> for String {
    fn from(a: Activation) -> String {
        a.to_string()
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Padding {
    #[default]
    Same,
    Valid,
}

fn one() -> usize {
    1
}

/// One layer of a sequential network. Per-sample shapes are `[C, H, W]` for
/// feature maps and `[F]` for vectors.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum LayerSpec {
    Dense {
        units: usize,
        #[serde(default)]
        activation: Activation,
        #[serde(default)]
        spectral_norm: bool,
    },
    Conv2d {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
        #[serde(default)]
        activation: Activation,
        #[serde(default)]
        spectral_norm: bool,
    },
    Conv2dTranspose {
        filters: usize,
        kernel: usize,
        #[serde(default = "one")]
        stride: usize,
        #[serde(default)]
        padding: Padding,
        /// Spatial output size; resolves the ambiguity of strided `same` padding.
        #[serde(default)]
        output_shape: Option<[usize; 2]>,
        #[serde(default)]
        activation: Activation,
        #[serde(default)]
        spectral_norm: bool,
    },
    BatchNorm {},
    Reshape {
        shape: Vec<usize>,
    },
    Flatten {},
    GlobalAvgPool {},
    AvgPool {
        size: usize,
    },
    Resize {
        height: usize,
        width: usize,
    },
    Dropout {
        rate: f64,
    },
    GaussianNoise {
        std: f64,
    },
    Activation {
        activation: Activation,
    },
}

impl LayerSpec {
    pub fn kind(&self) -> &'static str {
        match self {
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Conv2d { .. } => "conv2d",
            LayerSpec::Conv2dTranspose { .. } => "conv2d-transpose",
            LayerSpec::BatchNorm {} => "batch-norm",
            LayerSpec::Reshape { .. } => "reshape",
            LayerSpec::Flatten {} => "flatten",
            LayerSpec::GlobalAvgPool {} => "global-avg-pool",
            LayerSpec::AvgPool { .. } => "avg-pool",
            LayerSpec::Resize { .. } => "resize",
            LayerSpec::Dropout { .. } => "dropout",
            LayerSpec::GaussianNoise { .. } => "gaussian-noise",
            LayerSpec::Activation { .. } => "activation",
        }
    }

    fn activation(&self) -> Option<Activation> {
        match self {
            LayerSpec::Dense { activation, .. }
            | LayerSpec::Conv2d { activation, .. }
            | LayerSpec::Conv2dTranspose { activation, .. }
            | LayerSpec::Activation { activation } => Some(*activation),
            _ => None,
        }
    }

    fn spectral(&self) -> bool {
        matches!(
            self,
            LayerSpec::Dense { spectral_norm: true, .. }
                | LayerSpec::Conv2d { spectral_norm: true, .. }
                | LayerSpec::Conv2dTranspose { spectral_norm: true, .. }
        )
    }
}

/// A named tensor owned by a network.
#[derive(Clone, Debug, PartialEq)]
pub struct Param<T: Real = f32> {
    pub name: String,
    pub tensor: Tensor<T>,
}

/// Per-call switches for [`Network::forward`].
pub struct ForwardCtx<'a> {
    /// Enables dropout and noise and makes batch norm use batch statistics.
    pub training: bool,
    /// Lets the call advance running statistics and spectral-norm vectors.
    pub update_state: bool,
    pub rng: &'a mut ChaCha8Rng,
}

impl<'a> ForwardCtx<'a> {
    pub fn train(rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            training: true,
            update_state: true,
            rng,
        }
    }

    pub fn eval(rng: &'a mut ChaCha8Rng) -> Self {
        Self {
            training: false,
            update_state: false,
            rng,
        }
    }
}

#[derive(Clone, Debug)]
struct Slot {
    param: usize,
    state: usize,
    out_shape: Vec<usize>,
    geom: Option<ConvGeom>,
}

/// Sequential network with its weights and non-trainable state (batch-norm
/// running statistics and spectral-norm vectors).
#[derive(Clone, Debug)]
pub struct Network<T: Real = f32> {
    input_shape: Vec<usize>,
    layers: Vec<LayerSpec>,
    params: Vec<Param<T>>,
    state: Vec<Param<T>>,
    slots: Vec<Slot>,
    seed: u64,
}

fn shape_err(index: usize, spec: &LayerSpec, msg: String) -> NnError {
    NnError::Layer {
        index,
        kind: spec.kind().to_string(),
        source: Box::new(NnError::InvalidSpec(msg)),
    }
}

/// Whether the weights of layer `i` feed a rectifier, looking through layers
/// that do not change the nonlinearity.
fn feeds_rectifier(layers: &[LayerSpec], i: usize) -> bool {
    match layers[i].activation() {
        Some(Activation::Linear) | None => {}
        Some(a) => return a.is_rectifier(),
    }
    for l in &layers[i + 1..] {
        match l {
            LayerSpec::BatchNorm {} | LayerSpec::Dropout { .. } | LayerSpec::GaussianNoise { .. } => {}
            LayerSpec::Activation { activation } => return activation.is_rectifier(),
            _ => return false,
        }
    }
    false
}

impl<T: Real> Network<T> {
    /// Infers every layer's shape and initializes weights from `seed`.
    pub fn new(input_shape: &[usize], layers: Vec<LayerSpec>, seed: u64) -> Result<Self, NnError> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::new();
        let mut state = Vec::new();
        let mut slots = Vec::with_capacity(layers.len());
        let mut shape = input_shape.to_vec();
        if shape.is_empty() || shape.contains(&0) {
            return Err(NnError::InvalidSpec(format!("bad input shape {shape:?}")));
        }
        for (i, spec) in layers.iter().enumerate() {
            let err = |msg: String| shape_err(i, spec, msg);
            let name = |what: &str| format!("{i}.{}.{what}", spec.kind());
            let he = feeds_rectifier(&layers, i);
            let (p0, s0) = (params.len(), state.len());
            let mut geom = None;
            let mut add_weight = |wshape: &[usize], fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng| {
                let limit = if he {
                    (6.0 / fan_in as f64).sqrt()
                } else {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                };
                params.push(Param {
                    name: name("kernel"),
                    tensor: Tensor::rand_uniform(wshape, limit, rng),
                });
                params.push(Param {
                    name: name("bias"),
                    tensor: Tensor::zeros(&[wshape[0].max(1)]),
                });
            };
            let conv_dims = |shape: &[usize]| -> Result<(usize, usize, usize), NnError> {
                match shape {
                    [c, h, w] => Ok((*c, *h, *w)),
                    _ => Err(err(format!("expects [C, H, W] input, got {shape:?}"))),
                }
            };
            shape = match spec {
                LayerSpec::Dense { units, .. } => {
                    let [f] = shape[..] else {
                        return Err(err(format!("expects a flat input, got {shape:?}")));
                    };
                    if *units == 0 {
                        return Err(err("units must be positive".into()));
                    }
                    add_weight(&[*units, f], f, *units, &mut rng);
                    vec![*units]
                }
                LayerSpec::Conv2d {
                    filters,
                    kernel,
                    stride,
                    padding,
                    ..
                } => {
                    let (c, h, w) = conv_dims(&shape)?;
                    if *filters == 0 || *kernel == 0 || *stride == 0 {
                        return Err(err("filters, kernel and stride must be positive".into()));
                    }
                    let g = match padding {
                        Padding::Same => ConvGeom::same(c, *filters, *kernel, *stride, h, w),
                        Padding::Valid => {
                            if *kernel > h || *kernel > w {
                                return Err(err(format!("kernel {kernel} exceeds input {h}x{w}")));
                            }
                            ConvGeom::valid(c, *filters, *kernel, *stride, h, w)
                        }
                    };
                    let kk = kernel * kernel;
                    add_weight(&[*filters, c, *kernel, *kernel], c * kk, filters * kk, &mut rng);
                    geom = Some(g);
                    vec![*filters, g.ho, g.wo]
                }
                LayerSpec::Conv2dTranspose {
                    filters,
                    kernel,
                    stride,
                    padding,
                    output_shape,
                    ..
                } => {
                    let (c, h, w) = conv_dims(&shape)?;
                    if *filters == 0 || *kernel == 0 || *stride == 0 {
                        return Err(err("filters, kernel and stride must be positive".into()));
                    }
                    let [ho, wo] = output_shape.unwrap_or(match padding {
                        Padding::Same => [h * stride, w * stride],
                        Padding::Valid => [(h - 1) * stride + kernel, (w - 1) * stride + kernel],
                    });
                    let g = match padding {
                        Padding::Same => ConvGeom::same(*filters, c, *kernel, *stride, ho, wo),
                        Padding::Valid => {
                            if *kernel > ho || *kernel > wo {
                                return Err(err(format!("kernel {kernel} exceeds output {ho}x{wo}")));
                            }
                            ConvGeom::valid(*filters, c, *kernel, *stride, ho, wo)
                        }
                    };
                    if (g.ho, g.wo) != (h, w) {
                        return Err(err(format!(
                            "output {ho}x{wo} is not reachable from {h}x{w} with stride {stride}"
                        )));
                    }
                    let kk = kernel * kernel;
                    add_weight(&[c, *filters, *kernel, *kernel], filters * kk, c * kk, &mut rng);
                    // The bias follows the output channels, not the kernel's leading axis.
                    params.last_mut().expect("bias pushed").tensor = Tensor::zeros(&[*filters]);
                    geom = Some(g);
                    vec![*filters, ho, wo]
                }
                LayerSpec::BatchNorm {} => {
                    let c = shape[0];
                    params.push(Param {
                        name: name("gamma"),
                        tensor: Tensor::ones(&[c]),
                    });
                    params.push(Param {
                        name: name("beta"),
                        tensor: Tensor::zeros(&[c]),
                    });
                    state.push(Param {
                        name: name("moving_mean"),
                        tensor: Tensor::zeros(&[c]),
                    });
                    state.push(Param {
                        name: name("moving_variance"),
                        tensor: Tensor::ones(&[c]),
                    });
                    shape
                }
                LayerSpec::Reshape { shape: target } => {
                    if target.iter().product::<usize>() != shape.iter().product::<usize>() || target.is_empty() {
                        return Err(err(format!("cannot reshape {shape:?} to {target:?}")));
                    }
                    target.clone()
                }
                LayerSpec::Flatten {} => vec![shape.iter().product()],
                LayerSpec::GlobalAvgPool {} => {
                    let (c, _, _) = conv_dims(&shape)?;
                    vec![c]
                }
                LayerSpec::AvgPool { size } => {
                    let (c, h, w) = conv_dims(&shape)?;
                    if *size == 0 || *size > h || *size > w {
                        return Err(err(format!("pool size {size} does not fit {h}x{w}")));
                    }
                    vec![c, h / size, w / size]
                }
                LayerSpec::Resize { height, width } => {
                    let (c, _, _) = conv_dims(&shape)?;
                    if *height == 0 || *width == 0 {
                        return Err(err("resize target must be positive".into()));
                    }
                    vec![c, *height, *width]
                }
                LayerSpec::Dropout { rate } => {
                    if !(0.0..1.0).contains(rate) {
                        return Err(err(format!("dropout rate {rate} outside [0, 1)")));
                    }
                    shape
                }
                LayerSpec::GaussianNoise { std } => {
                    if !(*std >= 0.0) {
                        return Err(err(format!("noise std {std} must be non-negative")));
                    }
                    shape
                }
                LayerSpec::Activation { .. } => shape,
            };
            if spec.spectral() {
                let rows = params[p0].tensor.shape()[0];
                state.push(Param {
                    name: name("sn_u"),
                    tensor: Tensor::randn(&[rows], 1.0, &mut rng),
                });
            }
            slots.push(Slot {
                param: p0,
                state: s0,
                out_shape: shape.clone(),
                geom,
            });
        }
        Ok(Self {
            input_shape: input_shape.to_vec(),
            layers,
            params,
            state,
            slots,
            seed,
        })
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.input_shape
    }

    /// Per-sample output shape.
    pub fn output_shape(&self) -> &[usize] {
        self.slots
            .last()
            .map(|s| s.out_shape.as_slice())
            .unwrap_or(&self.input_shape)
    }

    /// Per-sample output shape of layer `index`.
    pub fn layer_output_shape(&self, index: usize) -> &[usize] {
        &self.slots[index].out_shape
    }

    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn params(&self) -> &[Param<T>] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Param<T>] {
        &mut self.params
    }

    pub fn state(&self) -> &[Param<T>] {
        &self.state
    }

    pub fn state_mut(&mut self) -> &mut [Param<T>] {
        &mut self.state
    }

    pub fn num_weights(&self) -> usize {
        self.params.iter().map(|p| p.tensor.len()).sum()
    }

    /// Records every weight as a leaf of `g`, in parameter order.
    pub fn bind(&self, g: &mut Graph<T>) -> Vec<Var> {
        self.params.iter().map(|p| g.input(p.tensor.clone())).collect()
    }

    /// Applies all layers without touching network state.
    pub fn forward(&self, g: &mut Graph<T>, params: &[Var], x: Var, ctx: &mut ForwardCtx) -> Result<Var, NnError> {
        self.run(g, params, x, ctx, self.layers.len(), None)
    }

    /// Applies the first `upto` layers (for intermediate features).
    pub fn forward_until(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        x: Var,
        ctx: &mut ForwardCtx,
        upto: usize,
    ) -> Result<Var, NnError> {
        self.run(g, params, x, ctx, upto.min(self.layers.len()), None)
    }

    /// Like [`Network::forward`], but commits running statistics and
    /// spectral-norm vectors when `ctx.update_state` is set.
    pub fn forward_mut(
        &mut self,
        g: &mut Graph<T>,
        params: &[Var],
        x: Var,
        ctx: &mut ForwardCtx,
    ) -> Result<Var, NnError> {
        let mut updates = Vec::new();
        let y = self.run(g, params, x, ctx, self.layers.len(), Some(&mut updates))?;
        if ctx.update_state {
            for (i, t) in updates {
                self.state[i].tensor = t;
            }
        }
        Ok(y)
    }

    /// Inference on a batch: no dropout or noise, running statistics.
    pub fn predict(&self, x: &Tensor<T>) -> Result<Tensor<T>, NnError> {
        self.predict_until(x, self.layers.len())
    }

    pub fn predict_until(&self, x: &Tensor<T>, upto: usize) -> Result<Tensor<T>, NnError> {
        let mut g = Graph::new();
        let params = self.bind(&mut g);
        let xv = g.input(x.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut ctx = ForwardCtx::eval(&mut rng);
        let y = self.forward_until(&mut g, &params, xv, &mut ctx, upto)?;
        Ok(g.value(y).clone())
    }

    fn run(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        x: Var,
        ctx: &mut ForwardCtx,
        upto: usize,
        mut updates: Option<&mut Vec<(usize, Tensor<T>)>>,
    ) -> Result<Var, NnError> {
        if params.len() != self.params.len() {
            return Err(NnError::GradientCount {
                expected: self.params.len(),
                got: params.len(),
            });
        }
        let shape = g.shape(x);
        if shape.len() != self.input_shape.len() + 1 || shape[1..] != self.input_shape[..] {
            return Err(NnError::InputShape {
                expected: self.input_shape.clone(),
                got: shape.to_vec(),
            });
        }
        let mut h = x;
        for i in 0..upto {
            h = self
                .apply(g, params, h, i, ctx, updates.as_deref_mut())
                .map_err(|e| NnError::Layer {
                    index: i,
                    kind: self.layers[i].kind().to_string(),
                    source: Box::new(e),
                })?;
        }
        Ok(h)
    }

    fn spectral_weight(
        &self,
        g: &mut Graph<T>,
        w: Var,
        state_idx: usize,
        updates: Option<&mut Vec<(usize, Tensor<T>)>>,
    ) -> Result<Var, NnError> {
        let wt = g.value(w);
        let rows = wt.shape()[0];
        let cols = wt.len() / rows;
        let mut u = self.state[state_idx].tensor.to_f64_vec();
        let (v, sigma) = power_iteration(&wt.to_f64_vec(), rows, cols, &mut u, 1);
        if let Some(up) = updates {
            up.push((state_idx, Tensor::from_f64(&[rows], &u)?));
        }
        if sigma.abs() < SIGMA_FLOOR {
            return Ok(w);
        }
        let outer: Rc<[T]> = u
            .iter()
            .flat_map(|&ur| v.iter().map(move |&vc| T::from_f64_lossy(ur * vc)))
            .collect();
        let masked = g.mask(w, outer)?;
        let s = g.sum(masked);
        let inv = g.recip(s);
        g.mul_scalar(w, inv)
    }

    fn bias(&self, g: &mut Graph<T>, y: Var, b: Var) -> Result<Var, NnError> {
        let shape = g.shape(y).to_vec();
        let bb = g.channel_broadcast(b, &shape)?;
        g.add(y, bb)
    }

    fn apply(
        &self,
        g: &mut Graph<T>,
        params: &[Var],
        x: Var,
        i: usize,
        ctx: &mut ForwardCtx,
        updates: Option<&mut Vec<(usize, Tensor<T>)>>,
    ) -> Result<Var, NnError> {
        let slot = &self.slots[i];
        let n = g.shape(x)[0];
        let kernel = |g: &mut Graph<T>, updates: Option<&mut Vec<(usize, Tensor<T>)>>| -> Result<Var, NnError> {
            let w = params[slot.param];
            if self.layers[i].spectral() {
                self.spectral_weight(g, w, slot.state, updates)
            } else {
                Ok(w)
            }
        };
        let batched = |s: &[usize]| {
            let mut v = vec![n];
            v.extend_from_slice(s);
            v
        };
        Ok(match &self.layers[i] {
            LayerSpec::Dense { activation, .. } => {
                let w = kernel(g, updates)?;
                let y = g.matmul(x, w, false, true)?;
                let y = self.bias(g, y, params[slot.param + 1])?;
                activation.apply(g, y)
            }
            LayerSpec::Conv2d { activation, .. } => {
                let w = kernel(g, updates)?;
                let y = g.conv(x, w, slot.geom.expect("conv geometry"))?;
                let y = self.bias(g, y, params[slot.param + 1])?;
                activation.apply(g, y)
            }
            LayerSpec::Conv2dTranspose { activation, .. } => {
                let w = kernel(g, updates)?;
                let y = g.conv_data(x, w, slot.geom.expect("conv geometry"))?;
                let y = self.bias(g, y, params[slot.param + 1])?;
                activation.apply(g, y)
            }
            LayerSpec::BatchNorm {} => {
                let shape = g.shape(x).to_vec();
                let count = (shape.iter().product::<usize>() / shape[1].max(1)) as f64;
                let (gamma, beta) = (params[slot.param], params[slot.param + 1]);
                let (mean, inv_std) = if ctx.training {
                    let s = g.channel_sum(x);
                    let mean = g.scale(s, 1.0 / count);
                    let mb = g.channel_broadcast(mean, &shape)?;
                    let xc = g.sub(x, mb)?;
                    let sq = g.square(xc);
                    let ss = g.channel_sum(sq);
                    let var = g.scale(ss, 1.0 / count);
                    if let Some(up) = updates {
                        let m = BATCH_NORM_MOMENTUM;
                        let blend = |old: &Tensor<T>, new: &Tensor<T>| {
                            old.data()
                                .iter()
                                .zip(new.data())
                                .map(|(o, b)| T::from_f64_lossy(m * o.as_f64() + (1.0 - m) * b.as_f64()))
                                .collect::<Vec<T>>()
                        };
                        let rm = blend(&self.state[slot.state].tensor, g.value(mean));
                        let rv = blend(&self.state[slot.state + 1].tensor, g.value(var));
                        up.push((slot.state, Tensor::new(&[shape[1]], rm)?));
                        up.push((slot.state + 1, Tensor::new(&[shape[1]], rv)?));
                    }
                    let ve = g.offset(var, BATCH_NORM_EPS);
                    let sd = g.sqrt(ve);
                    (mean, g.recip(sd))
                } else {
                    let mean = g.input(self.state[slot.state].tensor.clone());
                    let inv = self.state[slot.state + 1]
                        .tensor
                        .map(|v| T::one() / (v + T::from_f64_lossy(BATCH_NORM_EPS)).sqrt());
                    (mean, g.input(inv))
                };
                let mb = g.channel_broadcast(mean, &shape)?;
                let xc = g.sub(x, mb)?;
                let scale = g.mul(inv_std, gamma)?;
                let sb = g.channel_broadcast(scale, &shape)?;
                let y = g.mul(xc, sb)?;
                self.bias(g, y, beta)?
            }
            LayerSpec::Reshape { .. } | LayerSpec::Flatten {} => g.reshape(x, &batched(&slot.out_shape))?,
            LayerSpec::GlobalAvgPool {} => g.global_avg_pool(x)?,
            LayerSpec::AvgPool { size } => g.avg_pool(x, *size)?,
            LayerSpec::Resize { height, width } => g.resize(x, *height, *width)?,
            LayerSpec::Dropout { rate } => {
                if !ctx.training || *rate == 0.0 {
                    x
                } else {
                    let keep = 1.0 - rate;
                    let dist = Bernoulli::new(keep).map_err(|e| NnError::InvalidSpec(e.to_string()))?;
                    let on = T::from_f64_lossy(1.0 / keep);
                    let len = g.value(x).len();
                    let m: Rc<[T]> = (0..len)
                        .map(|_| if dist.sample(ctx.rng) { on } else { T::zero() })
                        .collect();
                    g.mask(x, m)?
                }
            }
            LayerSpec::GaussianNoise { std } => {
                if !ctx.training || *std == 0.0 {
                    x
                } else {
                    let shape = g.shape(x).to_vec();
                    let len = g.value(x).len();
                    let data = (0..len)
                        .map(|_| {
                            let e: f64 = StandardNormal.sample(ctx.rng);
                            T::from_f64_lossy(e * std)
                        })
                        .collect();
                    let noise = g.input(Tensor::new(&shape, data)?);
                    g.add(x, noise)?
                }
            }
            LayerSpec::Activation { activation } => activation.apply(g, x),
        })
    }

    /// Kernel of layer `index` as the layer applies it, after spectral
    /// normalization with the stored vector. `None` for layers without weights.
    pub fn effective_kernel(&self, index: usize) -> Option<Tensor<T>> {
        let spec = self.layers.get(index)?;
        spec.activation()?;
        if matches!(spec, LayerSpec::Activation { .. }) {
            return None;
        }
        let slot = &self.slots[index];
        let w = &self.params[slot.param].tensor;
        if !spec.spectral() {
            return Some(w.clone());
        }
        let mut u = self.state[slot.state].tensor.to_f64_vec();
        Some(crate::spectral::spectral_normalize(w, 1, &mut u))
    }

    /// Runs `iters` power iterations for every spectrally normalized layer and
    /// stores the converged vectors.
    pub fn refresh_spectral(&mut self, iters: usize) -> Result<(), NnError> {
        for (i, spec) in self.layers.iter().enumerate() {
            if !spec.spectral() {
                continue;
            }
            let slot = &self.slots[i];
            let w = &self.params[slot.param].tensor;
            let rows = w.shape()[0];
            let mut u = self.state[slot.state].tensor.to_f64_vec();
            power_iteration(&w.to_f64_vec(), rows, w.len() / rows, &mut u, iters);
            self.state[slot.state].tensor = Tensor::from_f64(&[rows], &u)?;
        }
        Ok(())
    }

    /// Converts weights and state to another precision.
    pub fn cast<U: Real>(&self) -> Network<U> {
        let conv = |ps: &[Param<T>]| {
            ps.iter()
                .map(|p| Param {
                    name: p.name.clone(),
                    tensor: p.tensor.cast(),
                })
                .collect()
        };
        Network {
            input_shape: self.input_shape.clone(),
            layers: self.layers.clone(),
            params: conv(&self.params),
            state: conv(&self.state),
            slots: self.slots.clone(),
            seed: self.seed,
        }
    }

    /// Replaces weights and state wholesale, checking names and shapes.
    pub fn load_tensors(&mut self, params: Vec<Param<T>>, state: Vec<Param<T>>) -> Result<(), NnError> {
        let check = |own: &[Param<T>], new: &[Param<T>]| -> Result<(), NnError> {
            if own.len() != new.len() {
                return Err(NnError::Format(format!(
                    "expected {} tensors, found {}",
                    own.len(),
                    new.len()
                )));
            }
            for (a, b) in own.iter().zip(new) {
                if a.name != b.name || a.tensor.shape() != b.tensor.shape() {
                    return Err(NnError::Format(format!(
                        "tensor '{}' {:?} does not match '{}' {:?}",
                        b.name,
                        b.tensor.shape(),
                        a.name,
                        a.tensor.shape()
                    )));
                }
            }
            Ok(())
        };
        check(&self.params, &params)?;
        check(&self.state, &state)?;
        self.params = params;
        self.state = state;
        Ok(())
    }
}

/// Draws a fresh generator from `rng`, for splitting streams deterministically.
pub fn fork_rng(rng: &mut ChaCha8Rng) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(rng.random())
}
