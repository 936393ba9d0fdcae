//! A small post-layer-norm transformer encoder with an extractive QA head.
//!
//! Everything runs in `f64`. The forward pass keeps per-row activations so
//! that [`backward`] can produce exact reverse-mode gradients for every
//! parameter. The hidden state after block `tap_layer` (1-based) is exposed
//! alongside the logits for the contrastive objective; both read-outs share
//! one forward pass.

mod backward;
mod forward;
mod params;

pub use backward::{backward, backward_into, Upstream};
pub use forward::{forward, gap, ForwardOutput, RowCache};
pub use params::{init_params, EncoderParams, LayerParams, TensorSpec};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum EncoderError {
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("invalid encoder config: {0}")]
    InvalidConfig(String),
    #[error("row {0} has no active positions")]
    EmptyMaskRow(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub vocab_size: usize,
    pub d_model: usize,
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_ffn: usize,
    pub max_positions: usize,
    /// Block whose output feeds the pooled embeddings, counted from 1.
    pub tap_layer: usize,
    #[serde(default = "default_ln_eps")]
    pub layer_norm_eps: f64,
}

fn default_ln_eps() -> f64 {
    1e-5
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            vocab_size: 8192,
            d_model: 64,
            n_layers: 4,
            n_heads: 4,
            d_ffn: 256,
            max_positions: 512,
            tap_layer: 3,
            layer_norm_eps: default_ln_eps(),
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<(), EncoderError> {
        let fail = |m: String| Err(EncoderError::InvalidConfig(m));
        if self.vocab_size == 0
            || self.d_model == 0
            || self.n_layers == 0
            || self.n_heads == 0
            || self.d_ffn == 0
            || self.max_positions == 0
        {
            return fail("all dimensions must be positive".into());
        }
        if !self.d_model.is_multiple_of(self.n_heads) {
            return fail(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if !(1..=self.n_layers).contains(&self.tap_layer) {
            return fail(format!("tap_layer {} outside 1..={}", self.tap_layer, self.n_layers));
        }
        if self.layer_norm_eps.is_nan() || self.layer_norm_eps <= 0.0 {
            return fail("layer_norm_eps must be positive".into());
        }
        Ok(())
    }

    pub fn head_dim(&self) -> usize {
        self.d_model / self.n_heads
    }
}

pub(crate) const GELU_C: f64 = 0.797_884_560_802_865_4; // sqrt(2/pi)
pub(crate) const GELU_A: f64 = 0.044_715;

/// tanh-approximated GELU.
pub(crate) fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (GELU_C * (x + GELU_A * x * x * x)).tanh())
}

pub(crate) fn gelu_grad(x: f64) -> f64 {
    let t = (GELU_C * (x + GELU_A * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * x * x)
}
