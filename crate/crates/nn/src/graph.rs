//! Eager computation tape with reverse-mode differentiation.
//!
//! Every op computes its value when it is recorded. [`Graph::grad`] walks the
//! tape backwards and records the vector-Jacobian products as new ops on the
//! same tape, so gradients are themselves differentiable (needed for the R1
//! gradient penalty). [`Graph::backward`] is the first-order convenience.

use std::rc::Rc;

use crate::error::NnError;
use crate::kernels::{self, ConvGeom};
use crate::real::Real;
use crate::tensor::Tensor;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Debug)]
enum Op<T> {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Offset(Var),
    MulScalar(Var, Var),
    Exp(Var),
    Log(Var),
    Tanh(Var),
    Sigmoid(Var),
    Softplus(Var),
    Square(Var),
    Recip(Var),
    Sqrt(Var),
    Mask(Var, Rc<[T]>),
    Sum(Var),
    Fill(Var),
    MatMul { a: Var, b: Var, ta: bool, tb: bool },
    ChannelSum(Var),
    ChannelBroadcast(Var),
    Conv { x: Var, w: Var, geom: ConvGeom },
    ConvData { gy: Var, w: Var, geom: ConvGeom },
    ConvFilter { x: Var, gy: Var, geom: ConvGeom },
    AvgPool { x: Var, k: usize },
    AvgPoolAdjoint { x: Var, k: usize },
    Resize(Var),
    ResizeAdjoint(Var),
    GlobalAvgPool(Var),
    GlobalAvgPoolAdjoint(Var),
    Reshape(Var),
    SliceCols { x: Var, start: usize },
    PadCols { x: Var, start: usize },
    SoftmaxCrossEntropy { logits: Var, residual: Rc<[T]> },
}

impl<T> Op<T> {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => vec![],
            Add(a, b) | Sub(a, b) | Mul(a, b) | MulScalar(a, b) => vec![*a, *b],
            MatMul { a, b, .. } => vec![*a, *b],
            Conv { x, w, .. } => vec![*x, *w],
            ConvData { gy, w, .. } => vec![*gy, *w],
            ConvFilter { x, gy, .. } => vec![*x, *gy],
            Scale(x, _) | Offset(x) | Exp(x) | Log(x) | Tanh(x) | Sigmoid(x) | Softplus(x)
            | Square(x) | Recip(x) | Sqrt(x) | Mask(x, _) | Sum(x) | Fill(x) | ChannelSum(x)
            | ChannelBroadcast(x) | Resize(x) | ResizeAdjoint(x) | GlobalAvgPool(x)
            | GlobalAvgPoolAdjoint(x) | Reshape(x) => vec![*x],
            AvgPool { x, .. } | AvgPoolAdjoint { x, .. } => vec![*x],
            SliceCols { x, .. } | PadCols { x, .. } => vec![*x],
            SoftmaxCrossEntropy { logits, .. } => vec![*logits],
        }
    }
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
}

/// Computation tape.
pub struct Graph<T: Real = f32> {
    nodes: Vec<Node<T>>,
}

impl<T: Real> Default for Graph<T> {
    fn default() -> Self {
        Self::new()
    }
}

fn same_shape(op: &'static str, a: &[usize], b: &[usize]) -> Result<(), NnError> {
    if a == b {
        Ok(())
    } else {
        Err(NnError::ShapeMismatch {
            op,
            lhs: a.to_vec(),
            rhs: b.to_vec(),
        })
    }
}

fn split_channels(shape: &[usize]) -> (usize, usize, usize) {
    let n = shape[0];
    let c = shape.get(1).copied().unwrap_or(1);
    let s = shape.iter().skip(2).product();
    (n, c, s)
}

fn planes(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize), NnError> {
    if shape.len() != 4 {
        return Err(NnError::ShapeMismatch {
            op,
            lhs: shape.to_vec(),
            rhs: vec![0, 0, 0, 0],
        });
    }
    Ok((shape[0] * shape[1], shape[2], shape[3]))
}

impl<T: Real> Graph<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    fn tensor(shape: &[usize], data: Vec<T>) -> Tensor<T> {
        Tensor::new(shape, data).expect("kernel produced consistent length")
    }

    /// Records a leaf. Whether it is differentiated depends only on whether it
    /// is passed to [`Graph::grad`].
    pub fn input(&mut self, value: Tensor<T>) -> Var {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    fn zip(&mut self, a: Var, b: Var, op: &'static str, f: impl Fn(T, T) -> T, node: Op<T>) -> Result<Var, NnError> {
        same_shape(op, self.shape(a), self.shape(b))?;
        let va = self.value(a);
        let vb = self.value(b);
        let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = va.shape().to_vec();
        Ok(self.push(Self::tensor(&shape, data), node))
    }

    fn unary(&mut self, x: Var, f: impl Fn(T) -> T, node: Op<T>) -> Var {
        let v = self.value(x).map(f);
        self.push(v, node)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip(a, b, "add", |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip(a, b, "sub", |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, NnError> {
        self.zip(a, b, "mul", |x, y| x * y, Op::Mul(a, b))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let ct = T::from_f64_lossy(c);
        self.unary(x, |v| v * ct, Op::Scale(x, c))
    }

    pub fn neg(&mut self, x: Var) -> Var {
        self.scale(x, -1.0)
    }

    pub fn offset(&mut self, x: Var, c: f64) -> Var {
        let ct = T::from_f64_lossy(c);
        self.unary(x, |v| v + ct, Op::Offset(x))
    }

    /// `x * s` where `s` holds a single element.
    pub fn mul_scalar(&mut self, x: Var, s: Var) -> Result<Var, NnError> {
        if self.value(s).len() != 1 {
            return Err(NnError::ShapeMismatch {
                op: "mul_scalar",
                lhs: self.shape(x).to_vec(),
                rhs: self.shape(s).to_vec(),
            });
        }
        let sv = self.value(s).data()[0];
        Ok(self.unary(x, |v| v * sv, Op::MulScalar(x, s)))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.exp(), Op::Exp(x))
    }

    pub fn log(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.ln(), Op::Log(x))
    }

    /// Clamped one ulp inside (−1, 1) so saturated outputs stay strictly bounded.
    pub fn tanh(&mut self, x: Var) -> Var {
        let lim = T::one() - T::epsilon();
        self.unary(x, |v| v.tanh().max(-lim).min(lim), Op::Tanh(x))
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        self.unary(x, sigmoid, Op::Sigmoid(x))
    }

    /// `ln(1 + eˣ)`, evaluated without overflow.
    pub fn softplus(&mut self, x: Var) -> Var {
        self.unary(x, softplus, Op::Softplus(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        self.unary(x, |v| v * v, Op::Square(x))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.recip(), Op::Recip(x))
    }

    pub fn sqrt(&mut self, x: Var) -> Var {
        self.unary(x, |v| v.sqrt(), Op::Sqrt(x))
    }

    /// Elementwise product with a constant tensor of the same size.
    pub fn mask(&mut self, x: Var, m: Rc<[T]>) -> Result<Var, NnError> {
        if m.len() != self.value(x).len() {
            return Err(NnError::ShapeMismatch {
                op: "mask",
                lhs: self.shape(x).to_vec(),
                rhs: vec![m.len()],
            });
        }
        let v = self.value(x);
        let data = v.data().iter().zip(m.iter()).map(|(&a, &b)| a * b).collect();
        let shape = v.shape().to_vec();
        Ok(self.push(Self::tensor(&shape, data), Op::Mask(x, m)))
    }

    fn mask_from(&mut self, x: Var, f: impl Fn(T) -> T) -> Var {
        let m: Rc<[T]> = self.value(x).data().iter().map(|&v| f(v)).collect();
        self.mask(x, m).expect("mask built from x")
    }

    pub fn relu(&mut self, x: Var) -> Var {
        self.mask_from(x, |v| if v > T::zero() { T::one() } else { T::zero() })
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        let a = T::from_f64_lossy(alpha);
        self.mask_from(x, |v| if v > T::zero() { T::one() } else { a })
    }

    pub fn abs(&mut self, x: Var) -> Var {
        self.mask_from(x, |v| {
            if v > T::zero() {
                T::one()
            } else if v < T::zero() {
                -T::one()
            } else {
                T::zero()
            }
        })
    }

    /// Sum of all elements (64-bit accumulation), shape `[1]`.
    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum_f64();
        self.push(Tensor::scalar(T::from_f64_lossy(s)), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let n = self.value(x).len().max(1);
        let s = self.sum(x);
        self.scale(s, 1.0 / n as f64)
    }

    /// Broadcasts a single-element node to `shape`.
    pub fn fill(&mut self, s: Var, shape: &[usize]) -> Result<Var, NnError> {
        if self.value(s).len() != 1 {
            return Err(NnError::ShapeMismatch {
                op: "fill",
                lhs: self.shape(s).to_vec(),
                rhs: vec![1],
            });
        }
        let v = self.value(s).data()[0];
        Ok(self.push(Tensor::full(shape, v), Op::Fill(s)))
    }

    /// `op(a)·op(b)` for rank-2 nodes.
    pub fn matmul(&mut self, a: Var, b: Var, ta: bool, tb: bool) -> Result<Var, NnError> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        let mismatch = || NnError::ShapeMismatch {
            op: "matmul",
            lhs: sa.clone(),
            rhs: sb.clone(),
        };
        if sa.len() != 2 || sb.len() != 2 {
            return Err(mismatch());
        }
        let k_a = if ta { sa[0] } else { sa[1] };
        let k_b = if tb { sb[1] } else { sb[0] };
        if k_a != k_b {
            return Err(mismatch());
        }
        let (c, m, n) = kernels::matmul(
            self.value(a).data(),
            sa[0],
            sa[1],
            ta,
            self.value(b).data(),
            sb[0],
            sb[1],
            tb,
        );
        Ok(self.push(Self::tensor(&[m, n], c), Op::MatMul { a, b, ta, tb }))
    }

    /// Sums `[N, C, ...]` down to `[C]`.
    pub fn channel_sum(&mut self, x: Var) -> Var {
        let shape = self.shape(x).to_vec();
        let (n, c, s) = split_channels(&shape);
        let data = kernels::channel_sum(self.value(x).data(), n, c, s);
        self.push(Self::tensor(&[c], data), Op::ChannelSum(x))
    }

    /// Broadcasts `[C]` along axis 1 of `shape`.
    pub fn channel_broadcast(&mut self, v: Var, shape: &[usize]) -> Result<Var, NnError> {
        let (n, c, s) = split_channels(shape);
        if self.shape(v) != [c] {
            return Err(NnError::ShapeMismatch {
                op: "channel_broadcast",
                lhs: self.shape(v).to_vec(),
                rhs: shape.to_vec(),
            });
        }
        let data = kernels::channel_broadcast(self.value(v).data(), n, c, s);
        Ok(self.push(Self::tensor(shape, data), Op::ChannelBroadcast(v)))
    }

    fn check_conv(&self, wide: Var, w: Var, geom: &ConvGeom, op: &'static str) -> Result<usize, NnError> {
        let sx = self.shape(wide);
        let sw = self.shape(w);
        let ok = sx.len() == 4
            && sx[1..] == [geom.c_wide, geom.h, geom.w]
            && sw == [geom.c_narrow, geom.c_wide, geom.k, geom.k];
        if !ok {
            return Err(NnError::ShapeMismatch {
                op,
                lhs: sx.to_vec(),
                rhs: sw.to_vec(),
            });
        }
        Ok(sx[0])
    }

    fn check_narrow(&self, narrow: Var, geom: &ConvGeom, op: &'static str) -> Result<usize, NnError> {
        let s = self.shape(narrow);
        if s.len() != 4 || s[1..] != [geom.c_narrow, geom.ho, geom.wo] {
            return Err(NnError::ShapeMismatch {
                op,
                lhs: s.to_vec(),
                rhs: vec![0, geom.c_narrow, geom.ho, geom.wo],
            });
        }
        Ok(s[0])
    }

    /// Convolution `[N, c_wide, h, w] → [N, c_narrow, ho, wo]`; `w` is
    /// `[c_narrow, c_wide, k, k]`.
    pub fn conv(&mut self, x: Var, w: Var, geom: ConvGeom) -> Result<Var, NnError> {
        let n = self.check_conv(x, w, &geom, "conv2d")?;
        let y = kernels::conv_forward(&geom, n, self.value(x).data(), self.value(w).data());
        Ok(self.push(
            Self::tensor(&[n, geom.c_narrow, geom.ho, geom.wo], y),
            Op::Conv { x, w, geom },
        ))
    }

    /// Adjoint of [`Graph::conv`] in its input: the transposed convolution.
    pub fn conv_data(&mut self, gy: Var, w: Var, geom: ConvGeom) -> Result<Var, NnError> {
        let n = self.check_narrow(gy, &geom, "conv2d-transpose")?;
        if self.shape(w) != [geom.c_narrow, geom.c_wide, geom.k, geom.k] {
            return Err(NnError::ShapeMismatch {
                op: "conv2d-transpose",
                lhs: self.shape(gy).to_vec(),
                rhs: self.shape(w).to_vec(),
            });
        }
        let gx = kernels::conv_data(&geom, n, self.value(gy).data(), self.value(w).data());
        Ok(self.push(
            Self::tensor(&[n, geom.c_wide, geom.h, geom.w], gx),
            Op::ConvData { gy, w, geom },
        ))
    }

    /// Filter gradient of [`Graph::conv`].
    pub fn conv_filter(&mut self, x: Var, gy: Var, geom: ConvGeom) -> Result<Var, NnError> {
        let n = self.check_narrow(gy, &geom, "conv2d-filter")?;
        let sx = self.shape(x);
        if sx.len() != 4 || sx[0] != n || sx[1..] != [geom.c_wide, geom.h, geom.w] {
            return Err(NnError::ShapeMismatch {
                op: "conv2d-filter",
                lhs: sx.to_vec(),
                rhs: self.shape(gy).to_vec(),
            });
        }
        let gw = kernels::conv_filter(&geom, n, self.value(x).data(), self.value(gy).data());
        Ok(self.push(
            Self::tensor(&[geom.c_narrow, geom.c_wide, geom.k, geom.k], gw),
            Op::ConvFilter { x, gy, geom },
        ))
    }

    pub fn avg_pool(&mut self, x: Var, k: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        let (nc, h, w) = planes(&s, "avg-pool")?;
        let y = kernels::avg_pool(self.value(x).data(), nc, h, w, k);
        Ok(self.push(
            Self::tensor(&[s[0], s[1], h / k, w / k], y),
            Op::AvgPool { x, k },
        ))
    }

    pub fn avg_pool_adjoint(&mut self, x: Var, k: usize, h: usize, w: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        let (nc, hs, ws) = planes(&s, "avg-pool-adjoint")?;
        if hs != h / k || ws != w / k {
            return Err(NnError::ShapeMismatch {
                op: "avg-pool-adjoint",
                lhs: s,
                rhs: vec![h, w],
            });
        }
        let y = kernels::avg_pool_adjoint(self.value(x).data(), nc, h, w, k);
        Ok(self.push(
            Self::tensor(&[s[0], s[1], h, w], y),
            Op::AvgPoolAdjoint { x, k },
        ))
    }

    /// Nearest-neighbour resize of the two trailing axes.
    pub fn resize(&mut self, x: Var, ho: usize, wo: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        let (nc, h, w) = planes(&s, "resize")?;
        let y = kernels::resize_nearest(self.value(x).data(), nc, h, w, ho, wo);
        Ok(self.push(Self::tensor(&[s[0], s[1], ho, wo], y), Op::Resize(x)))
    }

    pub fn resize_adjoint(&mut self, x: Var, h: usize, w: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        let (nc, ho, wo) = planes(&s, "resize-adjoint")?;
        let y = kernels::resize_nearest_adjoint(self.value(x).data(), nc, h, w, ho, wo);
        Ok(self.push(Self::tensor(&[s[0], s[1], h, w], y), Op::ResizeAdjoint(x)))
    }

    /// `[N, C, H, W] → [N, C]`.
    pub fn global_avg_pool(&mut self, x: Var) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        let (nc, h, w) = planes(&s, "global-avg-pool")?;
        let hw = h * w;
        let src = self.value(x).data();
        let y = (0..nc)
            .map(|p| {
                let acc: f64 = src[p * hw..(p + 1) * hw].iter().map(|v| v.as_f64()).sum();
                T::from_f64_lossy(acc / hw as f64)
            })
            .collect();
        Ok(self.push(Self::tensor(&[s[0], s[1]], y), Op::GlobalAvgPool(x)))
    }

    pub fn global_avg_pool_adjoint(&mut self, x: Var, h: usize, w: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 {
            return Err(NnError::ShapeMismatch {
                op: "global-avg-pool-adjoint",
                lhs: s,
                rhs: vec![h, w],
            });
        }
        let scale = T::from_f64_lossy(1.0 / (h * w) as f64);
        let mut y = Vec::with_capacity(s[0] * s[1] * h * w);
        for &v in self.value(x).data() {
            y.extend(std::iter::repeat_n(v * scale, h * w));
        }
        Ok(self.push(
            Self::tensor(&[s[0], s[1], h, w], y),
            Op::GlobalAvgPoolAdjoint(x),
        ))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, NnError> {
        let v = self.value(x).clone().reshaped(shape)?;
        Ok(self.push(v, Op::Reshape(x)))
    }

    /// Columns `[start, end)` of a rank-2 node.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || start > end || end > s[1] {
            return Err(NnError::ShapeMismatch {
                op: "slice-cols",
                lhs: s,
                rhs: vec![start, end],
            });
        }
        let src = self.value(x).data();
        let mut y = Vec::with_capacity(s[0] * (end - start));
        for r in 0..s[0] {
            y.extend_from_slice(&src[r * s[1] + start..r * s[1] + end]);
        }
        Ok(self.push(Self::tensor(&[s[0], end - start], y), Op::SliceCols { x, start }))
    }

    /// Places a rank-2 node at column `start` of a zero matrix with `total` columns.
    pub fn pad_cols(&mut self, x: Var, start: usize, total: usize) -> Result<Var, NnError> {
        let s = self.shape(x).to_vec();
        if s.len() != 2 || start + s[1] > total {
            return Err(NnError::ShapeMismatch {
                op: "pad-cols",
                lhs: s,
                rhs: vec![start, total],
            });
        }
        let src = self.value(x).data();
        let mut y = vec![T::zero(); s[0] * total];
        for r in 0..s[0] {
            y[r * total + start..r * total + start + s[1]]
                .copy_from_slice(&src[r * s[1]..(r + 1) * s[1]]);
        }
        Ok(self.push(Self::tensor(&[s[0], total], y), Op::PadCols { x, start }))
    }

    /// Mean softmax cross-entropy of `[N, K]` logits against class labels.
    ///
    /// The vector-Jacobian product treats the softmax residual as a constant,
    /// which is exact to first order only.
    pub fn softmax_cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var, NnError> {
        let s = self.shape(logits).to_vec();
        if s.len() != 2 || s[0] != labels.len() || labels.iter().any(|&l| l >= s[1]) {
            return Err(NnError::ShapeMismatch {
                op: "softmax-cross-entropy",
                lhs: s,
                rhs: vec![labels.len()],
            });
        }
        let (n, k) = (s[0], s[1]);
        let src = self.value(logits).data();
        let mut residual = vec![T::zero(); n * k];
        let mut loss = 0.0f64;
        for r in 0..n {
            let row: Vec<f64> = src[r * k..(r + 1) * k].iter().map(|v| v.as_f64()).collect();
            let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let z: f64 = row.iter().map(|v| (v - max).exp()).sum();
            let lse = max + z.ln();
            loss += lse - row[labels[r]];
            for c in 0..k {
                let p = (row[c] - lse).exp();
                let onehot = if c == labels[r] { 1.0 } else { 0.0 };
                residual[r * k + c] = T::from_f64_lossy((p - onehot) / n as f64);
            }
        }
        Ok(self.push(
            Tensor::scalar(T::from_f64_lossy(loss / n as f64)),
            Op::SoftmaxCrossEntropy {
                logits,
                residual: residual.into(),
            },
        ))
    }

    /// Reverse-mode gradients of the scalar `y` with respect to `wrt`.
    ///
    /// The gradients are recorded on this graph, so they can be combined into a
    /// new loss and differentiated again. `None` means `y` does not depend on
    /// that input.
    pub fn grad(&mut self, y: Var, wrt: &[Var]) -> Result<Vec<Option<Var>>, NnError> {
        if self.value(y).len() != 1 {
            return Err(NnError::NonScalarLoss(self.shape(y).to_vec()));
        }
        let n = y.0 + 1;
        let mut depends = vec![false; n];
        for w in wrt {
            if w.0 < n {
                depends[w.0] = true;
            }
        }
        for i in 0..n {
            if !depends[i] && self.nodes[i].op.inputs().iter().any(|v| depends[v.0]) {
                depends[i] = true;
            }
        }
        let mut grads: Vec<Option<Var>> = vec![None; n];
        if depends[y.0] {
            grads[y.0] = Some(self.input(Tensor::ones(&[1])));
        }
        for i in (0..n).rev() {
            if !depends[i] {
                continue;
            }
            let Some(up) = grads[i] else {
                continue;
            };
            let op = self.nodes[i].op.clone();
            let inputs = op.inputs();
            let need: Vec<bool> = inputs.iter().map(|v| depends[v.0]).collect();
            let contribs = self.vjp(Var(i), &op, up, &need)?;
            for (input, g) in inputs.into_iter().zip(contribs) {
                let Some(g) = g else { continue };
                grads[input.0] = Some(match grads[input.0] {
                    None => g,
                    Some(prev) => self.add(prev, g)?,
                });
            }
        }
        Ok(wrt
            .iter()
            .map(|w| if w.0 < n { grads[w.0] } else { None })
            .collect())
    }

    /// First-order gradients as tensors; inputs `y` does not depend on get zeros.
    pub fn backward(&mut self, y: Var, wrt: &[Var]) -> Result<Vec<Tensor<T>>, NnError> {
        let grads = self.grad(y, wrt)?;
        Ok(wrt
            .iter()
            .zip(grads)
            .map(|(w, g)| match g {
                Some(g) => self.value(g).clone(),
                None => Tensor::zeros(self.shape(*w)),
            })
            .collect())
    }

    fn vjp(&mut self, out: Var, op: &Op<T>, up: Var, need: &[bool]) -> Result<Vec<Option<Var>>, NnError> {
        use Op::*;
        let want = |i: usize| need.get(i).copied().unwrap_or(false);
        Ok(match op {
            Leaf => vec![],
            Add(_, _) => vec![Some(up), Some(up)],
            Sub(_, _) => vec![Some(up), want(1).then(|| self.neg(up))],
            Mul(a, b) => {
                let ga = if want(0) { Some(self.mul(up, *b)?) } else { None };
                let gb = if want(1) { Some(self.mul(up, *a)?) } else { None };
                vec![ga, gb]
            }
            Scale(_, c) => vec![Some(self.scale(up, *c))],
            Offset(_) => vec![Some(up)],
            MulScalar(x, s) => {
                let gx = if want(0) { Some(self.mul_scalar(up, *s)?) } else { None };
                let gs = if want(1) {
                    let p = self.mul(up, *x)?;
                    Some(self.sum(p))
                } else {
                    None
                };
                vec![gx, gs]
            }
            Exp(_) => vec![Some(self.mul(up, out)?)],
            Log(x) => {
                let r = self.recip(*x);
                vec![Some(self.mul(up, r)?)]
            }
            Tanh(_) => {
                let sq = self.square(out);
                let neg = self.scale(sq, -1.0);
                let d = self.offset(neg, 1.0);
                vec![Some(self.mul(up, d)?)]
            }
            Sigmoid(_) => {
                let neg = self.scale(out, -1.0);
                let one_minus = self.offset(neg, 1.0);
                let d = self.mul(out, one_minus)?;
                vec![Some(self.mul(up, d)?)]
            }
            Softplus(x) => {
                let d = self.sigmoid(*x);
                vec![Some(self.mul(up, d)?)]
            }
            Square(x) => {
                let d = self.scale(*x, 2.0);
                vec![Some(self.mul(up, d)?)]
            }
            Recip(_) => {
                let sq = self.square(out);
                let d = self.scale(sq, -1.0);
                vec![Some(self.mul(up, d)?)]
            }
            Sqrt(_) => {
                let r = self.recip(out);
                let d = self.scale(r, 0.5);
                vec![Some(self.mul(up, d)?)]
            }
            Mask(_, m) => vec![Some(self.mask(up, m.clone())?)],
            Sum(x) => {
                let shape = self.shape(*x).to_vec();
                vec![Some(self.fill(up, &shape)?)]
            }
            Fill(_) => vec![Some(self.sum(up))],
            MatMul { a, b, ta, tb } => {
                let (a, b) = (*a, *b);
                let ga = if want(0) {
                    Some(match (ta, tb) {
                        (false, false) => self.matmul(up, b, false, true)?,
                        (false, true) => self.matmul(up, b, false, false)?,
                        (true, false) => self.matmul(b, up, false, true)?,
                        (true, true) => self.matmul(b, up, true, true)?,
                    })
                } else {
                    None
                };
                let gb = if want(1) {
                    Some(match (ta, tb) {
                        (false, false) => self.matmul(a, up, true, false)?,
                        (false, true) => self.matmul(up, a, true, false)?,
                        (true, false) => self.matmul(a, up, false, false)?,
                        (true, true) => self.matmul(up, a, true, true)?,
                    })
                } else {
                    None
                };
                vec![ga, gb]
            }
            ChannelSum(x) => {
                let shape = self.shape(*x).to_vec();
                vec![Some(self.channel_broadcast(up, &shape)?)]
            }
            ChannelBroadcast(_) => vec![Some(self.channel_sum(up))],
            Conv { x, w, geom } => {
                let gx = if want(0) { Some(self.conv_data(up, *w, *geom)?) } else { None };
                let gw = if want(1) { Some(self.conv_filter(*x, up, *geom)?) } else { None };
                vec![gx, gw]
            }
            ConvData { gy, w, geom } => {
                let ggy = if want(0) { Some(self.conv(up, *w, *geom)?) } else { None };
                let gw = if want(1) { Some(self.conv_filter(up, *gy, *geom)?) } else { None };
                vec![ggy, gw]
            }
            ConvFilter { x, gy, geom } => {
                let gx = if want(0) { Some(self.conv_data(*gy, up, *geom)?) } else { None };
                let ggy = if want(1) { Some(self.conv(*x, up, *geom)?) } else { None };
                vec![gx, ggy]
            }
            AvgPool { x, k } => {
                let s = self.shape(*x).to_vec();
                vec![Some(self.avg_pool_adjoint(up, *k, s[2], s[3])?)]
            }
            AvgPoolAdjoint { k, .. } => vec![Some(self.avg_pool(up, *k)?)],
            Resize(x) => {
                let s = self.shape(*x).to_vec();
                vec![Some(self.resize_adjoint(up, s[2], s[3])?)]
            }
            ResizeAdjoint(x) => {
                let s = self.shape(*x).to_vec();
                vec![Some(self.resize(up, s[2], s[3])?)]
            }
            GlobalAvgPool(x) => {
                let s = self.shape(*x).to_vec();
                vec![Some(self.global_avg_pool_adjoint(up, s[2], s[3])?)]
            }
            GlobalAvgPoolAdjoint(_) => vec![Some(self.global_avg_pool(up)?)],
            Reshape(x) => {
                let s = self.shape(*x).to_vec();
                vec![Some(self.reshape(up, &s)?)]
            }
            SliceCols { x, start } => {
                let total = self.shape(*x)[1];
                vec![Some(self.pad_cols(up, *start, total)?)]
            }
            PadCols { x, start } => {
                let width = self.shape(*x)[1];
                vec![Some(self.slice_cols(up, *start, start + width)?)]
            }
            SoftmaxCrossEntropy { logits, residual } => {
                let shape = self.shape(*logits).to_vec();
                let r = self.input(Tensor::new(&shape, residual.to_vec())?);
                vec![Some(self.mul_scalar(r, up)?)]
            }
        })
    }
}

pub(crate) fn sigmoid<T: Real>(v: T) -> T {
    if v >= T::zero() {
        T::one() / (T::one() + (-v).exp())
    } else {
        let e = v.exp();
        e / (T::one() + e)
    }
}

pub(crate) fn softplus<T: Real>(v: T) -> T {
    if v > T::zero() {
        v + (-v).exp().ln_1p()
    } else {
        v.exp().ln_1p()
    }
}
