//! Small tensor engine with reverse-mode differentiation, the layer kinds the
//! generative models need, Adam, and spectral normalization.

// `!(x > 0.0)` style guards also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod gradcheck;
pub mod graph;
pub mod io;
pub mod kernels;
pub mod layers;
pub mod optim;
pub mod real;
pub mod spectral;
pub mod tensor;

pub use error::NnError;
pub use graph::{Graph, Var};
pub use kernels::ConvGeom;
pub use layers::{fork_rng, Activation, ForwardCtx, LayerSpec, Network, Padding, Param};
pub use optim::Adam;
pub use real::Real;
pub use tensor::Tensor;

pub use rand_chacha::ChaCha8Rng;
