//! Adaptive-moment optimizer with decoupled weight decay.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderConfig, EncoderParams};

#[derive(Debug, Error, PartialEq)]
pub enum OptimError {
    #[error("non-finite gradient in {0}")]
    NonFiniteGradient(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
}

impl AdamW {
    pub fn new(lr: f64, weight_decay: f64) -> Self {
        Self { lr, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay }
    }
}

/// First and second moments, shaped like the parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub step: u64,
    pub m: EncoderParams,
    pub v: EncoderParams,
}

impl AdamState {
    pub fn new(cfg: &EncoderConfig) -> Self {
        Self { step: 0, m: EncoderParams::zeros(cfg), v: EncoderParams::zeros(cfg) }
    }
}

impl AdamW {
    /// One bias-corrected update:
    /// `param -= lr * (m̂ / (sqrt(v̂) + eps) + weight_decay * param)`.
    ///
    /// Nothing is modified when any gradient is non-finite.
    pub fn step(
        &self,
        cfg: &EncoderConfig,
        params: &mut EncoderParams,
        grads: &EncoderParams,
        state: &mut AdamState,
    ) -> Result<(), OptimError> {
        let g = grads.slices();
        if let Some(bad) = g.iter().position(|s| s.iter().any(|v| !v.is_finite())) {
            return Err(OptimError::NonFiniteGradient(EncoderParams::specs(cfg)[bad].name.clone()));
        }
        state.step += 1;
        let t = state.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (((p, g), m), v) in
            params.slices_mut().into_iter().zip(g).zip(state.m.slices_mut()).zip(state.v.slices_mut())
        {
            for i in 0..p.len() {
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g[i];
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g[i] * g[i];
                let m_hat = m[i] / bc1;
                let v_hat = v[i] / bc2;
                p[i] -= self.lr * (m_hat / (v_hat.sqrt() + self.eps) + self.weight_decay * p[i]);
            }
        }
        Ok(())
    }
}

/// Scales gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm(grads: &mut EncoderParams, max_norm: f64) -> f64 {
    let norm = grads.slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>().sqrt();
    if norm > max_norm && norm > 0.0 {
        let scale = max_norm / norm;
        for s in grads.slices_mut() {
            s.iter_mut().for_each(|v| *v *= scale);
        }
    }
    norm
}
