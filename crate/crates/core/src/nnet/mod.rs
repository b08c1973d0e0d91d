//! Sequence model: pre-sequence projection with positional encoding, a stack
//! of pre-norm transformer layers using Gaussian-decay absolute-score
//! attention (optionally densely connected), and task heads. Gradients are
//! computed by hand-written reverse passes.

mod attention;
mod config;
mod gradcheck;
mod linalg;
mod model;
mod params;
mod real;

pub use attention::{
    gaussian_weight, tgsa_attention, tgsa_attention_backward, AttentionCache, AttentionGrads, AttentionParams,
    SIGMA_MIN,
};
pub use config::ModelConfig;
pub use gradcheck::{grad_check, grad_check_with, GradCheckReport};
pub use linalg::{gelu, gelu_grad};
pub use model::{
    sinusoidal_pe, ForwardPass, GradTape, Gradients, HeadGrads, HeadKind, HeadOutputs, Model, LN_EPS,
};
pub use params::{parameter_count, Param, ParamStore, INIT_STD};
pub use real::Real;
