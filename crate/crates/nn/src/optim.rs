//! Adam with bias correction and optional global-norm clipping.

use crate::error::NnError;
use crate::layers::Param;
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Rescale the full gradient set when its L2 norm exceeds this.
    pub clip_norm: Option<f64>,
    step: u64,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-7,
            clip_norm: None,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    pub fn with_clip_norm(mut self, clip: f64) -> Self {
        self.clip_norm = Some(clip);
        self
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    /// Applies one update. Nothing is modified if any gradient is non-finite.
    pub fn step<T: Real>(&mut self, params: &mut [Param<T>], grads: &[Tensor<T>]) -> Result<(), NnError> {
        if params.len() != grads.len() {
            return Err(NnError::GradientCount {
                expected: params.len(),
                got: grads.len(),
            });
        }
        let mut norm_sq = 0.0;
        for (p, g) in params.iter().zip(grads) {
            if p.tensor.shape() != g.shape() {
                return Err(NnError::ShapeMismatch {
                    op: "adam",
                    lhs: p.tensor.shape().to_vec(),
                    rhs: g.shape().to_vec(),
                });
            }
            if !g.all_finite() {
                return Err(NnError::NonFiniteGradient(p.name.clone()));
            }
            norm_sq += g.norm_sq_f64();
        }
        if self.m.len() != params.len() {
            self.m = params.iter().map(|p| vec![0.0; p.tensor.len()]).collect();
            self.v = self.m.clone();
        }
        let scale = match self.clip_norm {
            Some(c) if norm_sq.sqrt() > c => c / norm_sq.sqrt(),
            _ => 1.0,
        };
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for (((w, gi), mi), vi) in p.tensor.data_mut().iter_mut().zip(g.data()).zip(m.iter_mut()).zip(v.iter_mut()) {
                let gi = gi.as_f64() * scale;
                *mi = self.beta1 * *mi + (1.0 - self.beta1) * gi;
                *vi = self.beta2 * *vi + (1.0 - self.beta2) * gi * gi;
                let update = self.lr * (*mi / bc1) / ((*vi / bc2).sqrt() + self.eps);
                *w = T::from_f64_lossy(w.as_f64() - update);
            }
        }
        Ok(())
    }
}
