use serde::{Deserialize, Serialize};

use super::tensor::Tensor;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepOutcome {
    /// False when the gradient held a non-finite entry and nothing moved.
    pub applied: bool,
    /// Global gradient norm before clipping.
    pub grad_norm: f64,
}

/// Adam with bias correction. Moments are kept per parameter tensor.
#[derive(Clone, Debug)]
pub struct Adam {
    pub config: AdamConfig,
    step: u64,
    m: Vec<Tensor>,
    v: Vec<Tensor>,
}

pub fn global_norm(grads: &[Tensor]) -> f64 {
    grads.iter().map(Tensor::norm_sq).sum::<f64>().sqrt()
}

/// Rescales `grads` in place so their joint norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_global_norm(grads: &mut [Tensor], max_norm: f64) -> f64 {
    let norm = global_norm(grads);
    if norm > max_norm && norm > 0.0 {
        let s = max_norm / norm;
        for g in grads.iter_mut() {
            g.data_mut().iter_mut().for_each(|x| *x *= s);
        }
    }
    norm
}

impl Adam {
    pub fn new(params: &[Tensor], config: AdamConfig) -> Self {
        let zeros: Vec<Tensor> = params.iter().map(|p| Tensor::zeros(p.shape())).collect();
        Self { config, step: 0, m: zeros.clone(), v: zeros }
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn step(&mut self, params: &mut [Tensor], grads: &[Tensor], lr: f64, clip: Option<f64>) -> Result<StepOutcome> {
        if params.len() != self.m.len() || grads.len() != params.len() {
            return Err(Error::Shape(format!(
                "adam state has {} tensors, got {} params and {} grads",
                self.m.len(),
                params.len(),
                grads.len()
            )));
        }
        for ((p, g), m) in params.iter().zip(grads).zip(&self.m) {
            if p.shape() != g.shape() || p.shape() != m.shape() {
                return Err(Error::Shape(format!("param {:?} / grad {:?} / state {:?}", p.shape(), g.shape(), m.shape())));
            }
        }
        let mut grads = grads.to_vec();
        let grad_norm = global_norm(&grads);
        if !grad_norm.is_finite() {
            return Ok(StepOutcome { applied: false, grad_norm });
        }
        if let Some(max_norm) = clip {
            clip_global_norm(&mut grads, max_norm);
        }

        self.step += 1;
        let AdamConfig { beta1, beta2, eps } = self.config;
        let bc1 = 1.0 - beta1.powi(self.step as i32);
        let bc2 = 1.0 - beta2.powi(self.step as i32);
        for (k, p) in params.iter_mut().enumerate() {
            let g = grads[k].data();
            let m = self.m[k].data_mut();
            let v = self.v[k].data_mut();
            for (i, x) in p.data_mut().iter_mut().enumerate() {
                m[i] = beta1 * m[i] + (1.0 - beta1) * g[i];
                v[i] = beta2 * v[i] + (1.0 - beta2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                *x -= lr * mhat / (vhat.sqrt() + eps);
            }
        }
        Ok(StepOutcome { applied: true, grad_norm })
    }
}
