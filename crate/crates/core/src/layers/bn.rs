//! Batch normalization over the channel axis.
//!
//! Statistics pool every timestep, batch element and spatial position of a
//! channel. Training mode normalizes with batch statistics and reports them
//! so the caller can update the running averages; inference mode uses the
//! running statistics and is a per-channel affine map.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BnParams {
    pub gamma: Vec<f64>,
    pub beta: Vec<f64>,
    /// Running mean.
    pub mu: Vec<f64>,
    /// Running variance.
    pub sigma2: Vec<f64>,
    pub eps: f64,
    pub momentum: f64,
}

impl BnParams {
    pub fn new(channels: usize) -> Self {
        Self {
            gamma: vec![1.0; channels],
            beta: vec![0.0; channels],
            mu: vec![0.0; channels],
            sigma2: vec![1.0; channels],
            eps: 1e-5,
            momentum: 0.1,
        }
    }

    pub fn channels(&self) -> usize {
        self.gamma.len()
    }

    pub fn validate(&self) -> Result<()> {
        let c = self.channels();
        if self.beta.len() != c || self.mu.len() != c || self.sigma2.len() != c {
            return Err(TawqError::Shape("batch-norm parameter lengths differ".into()));
        }
        if !(self.eps > 0.0) {
            return Err(TawqError::Param("batch-norm eps must be positive".into()));
        }
        if let Some(c) = self.sigma2.iter().position(|&v| !(v >= 0.0)) {
            return Err(TawqError::Param(format!("negative running variance in channel {c}")));
        }
        Ok(())
    }

    /// Fold running statistics into `(scale, shift)` per channel.
    pub fn affine(&self) -> (Vec<f64>, Vec<f64>) {
        let scale: Vec<f64> = self
            .gamma
            .iter()
            .zip(&self.sigma2)
            .map(|(g, v)| g / (v + self.eps).sqrt())
            .collect();
        let shift = self
            .beta
            .iter()
            .zip(&self.mu)
            .zip(&scale)
            .map(|((b, m), s)| b - m * s)
            .collect();
        (scale, shift)
    }

    /// Blend batch statistics into the running averages.
    pub fn update_running(&mut self, batch_mean: &[f64], batch_var_unbiased: &[f64]) {
        let m = self.momentum;
        for c in 0..self.channels() {
            self.mu[c] = (1.0 - m) * self.mu[c] + m * batch_mean[c];
            self.sigma2[c] = (1.0 - m) * self.sigma2[c] + m * batch_var_unbiased[c];
        }
    }
}

/// Cached values from a training-mode forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BnCache {
    pub x_hat: Vec<f64>,
    pub inv_std: Vec<f64>,
    pub batch_mean: Vec<f64>,
    pub batch_var_unbiased: Vec<f64>,
}

/// `x` is laid out as `blocks` repetitions of `(channels, spatial)`.
pub(crate) fn bn_forward_train(p: &BnParams, x: &[f64], spatial: usize) -> (Vec<f64>, BnCache) {
    let c_n = p.channels();
    let block = c_n * spatial;
    let blocks = x.len() / block;
    let count = (blocks * spatial) as f64;
    let mut mean = vec![0.0; c_n];
    for b in 0..blocks {
        for (c, m) in mean.iter_mut().enumerate() {
            let base = b * block + c * spatial;
            *m += x[base..base + spatial].iter().sum::<f64>();
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    let mut var = vec![0.0; c_n];
    for b in 0..blocks {
        for c in 0..c_n {
            let base = b * block + c * spatial;
            var[c] += x[base..base + spatial]
                .iter()
                .map(|v| (v - mean[c]) * (v - mean[c]))
                .sum::<f64>();
        }
    }
    let unbiased: Vec<f64> = var
        .iter()
        .map(|v| if count > 1.0 { v / (count - 1.0) } else { 0.0 })
        .collect();
    var.iter_mut().for_each(|v| *v /= count);
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + p.eps).sqrt()).collect();
    let mut x_hat = vec![0.0; x.len()];
    let mut y = vec![0.0; x.len()];
    for (i, &v) in x.iter().enumerate() {
        let c = (i % block) / spatial;
        let h = (v - mean[c]) * inv_std[c];
        x_hat[i] = h;
        y[i] = p.gamma[c] * h + p.beta[c];
    }
    (
        y,
        BnCache {
            x_hat,
            inv_std,
            batch_mean: mean,
            batch_var_unbiased: unbiased,
        },
    )
}

pub(crate) fn bn_forward_eval(p: &BnParams, x: &[f64], spatial: usize) -> Vec<f64> {
    let block = p.channels() * spatial;
    x.iter()
        .enumerate()
        .map(|(i, &v)| {
            let c = (i % block) / spatial;
            p.gamma[c] * (v - p.mu[c]) / (p.sigma2[c] + p.eps).sqrt() + p.beta[c]
        })
        .collect()
}

/// Returns `(grad_x, grad_gamma, grad_beta)` for a training-mode pass.
pub(crate) fn bn_backward(
    p: &BnParams,
    cache: &BnCache,
    grad_y: &[f64],
    spatial: usize,
) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let c_n = p.channels();
    let block = c_n * spatial;
    let count = (grad_y.len() / block * spatial) as f64;
    let mut g_gamma = vec![0.0; c_n];
    let mut g_beta = vec![0.0; c_n];
    for (i, &g) in grad_y.iter().enumerate() {
        let c = (i % block) / spatial;
        g_gamma[c] += g * cache.x_hat[i];
        g_beta[c] += g;
    }
    let grad_x = grad_y
        .iter()
        .enumerate()
        .map(|(i, &g)| {
            let c = (i % block) / spatial;
            p.gamma[c] * cache.inv_std[c] * (g - g_beta[c] / count - cache.x_hat[i] * g_gamma[c] / count)
        })
        .collect();
    (grad_x, g_gamma, g_beta)
}
