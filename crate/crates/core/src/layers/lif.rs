//! Leaky integrate-and-fire neurons with hard reset.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LifConfig {
    pub v_threshold: f64,
    pub v_reset: f64,
    /// Membrane time constant; the membrane keeps `1 − 1/τ` of its value.
    pub tau: f64,
    /// Steepness of the sigmoid surrogate for the spike function.
    pub sg_scale_neuron: f64,
}

impl Default for LifConfig {
    fn default() -> Self {
        Self {
            v_threshold: 1.0,
            v_reset: 0.0,
            tau: 2.0,
            sg_scale_neuron: 4.0,
        }
    }
}

impl LifConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 1.0) {
            return Err(TawqError::Param(format!("tau must exceed 1, got {}", self.tau)));
        }
        if !(self.v_threshold > self.v_reset) {
            return Err(TawqError::Param("v_threshold must exceed v_reset".into()));
        }
        if !(self.sg_scale_neuron > 0.0) {
            return Err(TawqError::Param("sg_scale_neuron must be positive".into()));
        }
        Ok(())
    }

    #[inline]
    pub fn decay(&self) -> f64 {
        1.0 - 1.0 / self.tau
    }

    #[inline]
    pub(crate) fn charge(&self, u_prev: f64, input_current: f64) -> f64 {
        self.decay() * u_prev + input_current
    }

    /// Heaviside with `H(0) = 1`.
    #[inline]
    pub(crate) fn fire(&self, u: f64) -> f64 {
        if u >= self.v_threshold {
            1.0
        } else {
            0.0
        }
    }

    #[inline]
    pub(crate) fn fire_relaxed(&self, u: f64) -> f64 {
        1.0 / (1.0 + (-self.sg_scale_neuron * (u - self.v_threshold)).exp())
    }

    /// Surrogate of `∂spike/∂U`: derivative of `σ(k (U − v_th))`.
    #[inline]
    pub(crate) fn surrogate(&self, u: f64) -> f64 {
        let s = self.fire_relaxed(u);
        self.sg_scale_neuron * s * (1.0 - s)
    }

    #[inline]
    pub(crate) fn reset(&self, u: f64, spike: f64) -> f64 {
        u * (1.0 - spike) + self.v_reset * spike
    }
}

/// One charge/fire/reset step. `input_current` is added to the decayed
/// membrane as is.
pub fn lif_step(u_prev: &[f64], input_current: &[f64], cfg: &LifConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    if u_prev.len() != input_current.len() {
        return Err(TawqError::Shape(format!(
            "membrane has {} entries, input has {}",
            u_prev.len(),
            input_current.len()
        )));
    }
    let mut spikes = Vec::with_capacity(u_prev.len());
    let mut next = Vec::with_capacity(u_prev.len());
    for (&u, &i) in u_prev.iter().zip(input_current) {
        let h = cfg.charge(u, i);
        let s = cfg.fire(h);
        spikes.push(s);
        next.push(cfg.reset(h, s));
    }
    Ok((spikes, next))
}

/// Multi-step LIF over a `(T, N)` block where `N` is batch × neurons.
///
/// The layer input is divided by `τ` before charging. Returns the charged
/// potentials `H[t]` and the emitted spikes.
pub(crate) fn lif_forward(x: &[f64], steps: usize, cfg: &LifConfig, relaxed: bool) -> (Vec<f64>, Vec<f64>) {
    let n = x.len() / steps;
    let mut u = vec![cfg.v_reset; n];
    let mut charge = vec![0.0; x.len()];
    let mut spikes = vec![0.0; x.len()];
    for t in 0..steps {
        let off = t * n;
        for i in 0..n {
            let h = cfg.charge(u[i], x[off + i] / cfg.tau);
            let s = if relaxed { cfg.fire_relaxed(h) } else { cfg.fire(h) };
            charge[off + i] = h;
            spikes[off + i] = s;
            u[i] = cfg.reset(h, s);
        }
    }
    (charge, spikes)
}

/// Backpropagation through time for [`lif_forward`], including the reset path.
pub(crate) fn lif_backward(
    grad_spikes: &[f64],
    charge: &[f64],
    spikes: &[f64],
    steps: usize,
    cfg: &LifConfig,
) -> Vec<f64> {
    let n = charge.len() / steps;
    let mut grad_x = vec![0.0; charge.len()];
    // gradient w.r.t. the membrane carried out of step t
    let mut grad_u = vec![0.0; n];
    for t in (0..steps).rev() {
        let off = t * n;
        for i in 0..n {
            let h = charge[off + i];
            let s = spikes[off + i];
            let ds = cfg.surrogate(h);
            let g_s = grad_spikes[off + i] + grad_u[i] * (cfg.v_reset - h);
            let g_h = g_s * ds + grad_u[i] * (1.0 - s);
            grad_x[off + i] = g_h / cfg.tau;
            grad_u[i] = g_h * cfg.decay();
        }
    }
    grad_x
}
