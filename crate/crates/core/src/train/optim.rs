use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};
use crate::train::GradientBundle;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adamw,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Schedule {
    Constant,
    #[default]
    Cosine,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub lr: f64,
    pub optimizer: OptimizerKind,
    pub schedule: Schedule,
    pub weight_decay: f64,
    /// Global gradient-norm cap.
    pub clip_norm: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Quantize every timestep from `I_n` directly, without carried state.
    pub ablate_temporal: bool,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-2,
            optimizer: OptimizerKind::Adamw,
            schedule: Schedule::Cosine,
            weight_decay: 0.0,
            clip_norm: 1.0,
            epochs: 50,
            batch_size: 32,
            seed: 0,
            ablate_temporal: false,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr >= 0.0) {
            return Err(TawqError::Param("lr must be non-negative".into()));
        }
        if !(self.clip_norm > 0.0) {
            return Err(TawqError::Param("clip_norm must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(TawqError::Param("batch_size must be at least 1".into()));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(TawqError::Param("weight_decay must be non-negative".into()));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        match self.schedule {
            Schedule::Constant => self.lr,
            Schedule::Cosine => {
                let total = self.epochs.max(1) as f64;
                0.5 * self.lr * (1.0 + (std::f64::consts::PI * epoch as f64 / total).cos())
            }
        }
    }
}

/// Moment buffers of the optimizer.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    pub step: u64,
    pub m: Vec<Vec<f64>>,
    pub v: Vec<Vec<f64>>,
}

/// Scale `grads` so their global norm is at most `clip_norm`. Returns the norm
/// before clipping.
pub fn clip_gradients(grads: &mut GradientBundle, clip_norm: f64) -> f64 {
    let norm = grads.norm();
    if norm > clip_norm {
        grads.scale(clip_norm / norm);
    }
    norm
}

/// Clip, then apply one optimizer update with learning rate `lr`.
pub fn clip_and_step(
    params: &mut [(String, &mut Vec<f64>)],
    grads: &mut GradientBundle,
    cfg: &TrainConfig,
    state: &mut OptimizerState,
    lr: f64,
) -> Result<f64> {
    if params.len() != grads.grads.len() {
        return Err(TawqError::State("gradient bundle does not match the parameters".into()));
    }
    let norm = clip_gradients(grads, cfg.clip_norm);
    state.step += 1;
    match cfg.optimizer {
        OptimizerKind::Sgd => {
            for ((_, p), g) in params.iter_mut().zip(&grads.grads) {
                for (pv, gv) in p.iter_mut().zip(g) {
                    *pv -= lr * gv;
                }
            }
        }
        OptimizerKind::Adamw => {
            if state.m.is_empty() {
                state.m = grads.grads.iter().map(|g| vec![0.0; g.len()]).collect();
                state.v = state.m.clone();
            }
            let t = state.step as i32;
            let bc1 = 1.0 - cfg.beta1.powi(t);
            let bc2 = 1.0 - cfg.beta2.powi(t);
            for (k, ((_, p), g)) in params.iter_mut().zip(&grads.grads).enumerate() {
                let (m, v) = (&mut state.m[k], &mut state.v[k]);
                for i in 0..p.len() {
                    p[i] *= 1.0 - lr * cfg.weight_decay;
                    m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g[i];
                    v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g[i] * g[i];
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    p[i] -= lr * m_hat / (v_hat.sqrt() + cfg.adam_eps);
                }
            }
        }
    }
    Ok(norm)
}
