//! Reverse-mode gradients through the temporal graph.

use crate::error::{Location, Result, TawqError};
use crate::layers::{bn, lif, Layer, LayerTrace, Network, SynapseMode, Traces};
use crate::quant::{surrogate_scalar, NormStats, QuantConfig, QuantizerState};

/// Gradient of the loss with respect to `I_n`, given the upstream gradient
/// with respect to every timestep's quantized weights.
pub fn tawq_backward(upstream: &[Vec<f64>], state: &QuantizerState, cfg: &QuantConfig) -> Result<Vec<f64>> {
    if state.c_s.len() != state.w_q.len() + 1 {
        return Err(TawqError::State("quantizer state must hold T + 1 intermediate values".into()));
    }
    if upstream.len() != state.w_q.len() {
        return Err(TawqError::State(format!(
            "upstream covers {} timesteps, state holds {}",
            upstream.len(),
            state.w_q.len()
        )));
    }
    recurrence_backward(upstream, &state.c_s, &state.weights_f64(), cfg)
}

/// Reverse accumulation over `t = T..1` of
/// `C[t] = λ C[t−1] (1 − |W[t−1]|/n) + (1 − λ) I_n`, `W[t] = Q(C[t])`.
///
/// `c_s` holds `T + 1` entries starting at `C[0]`; `weights[t]` is `W[t+1]`.
pub(crate) fn recurrence_backward(
    upstream: &[Vec<f64>],
    c_s: &[Vec<f64>],
    weights: &[Vec<f64>],
    cfg: &QuantConfig,
) -> Result<Vec<f64>> {
    let steps = weights.len();
    let Some(len) = c_s.first().map(Vec::len) else {
        return Err(TawqError::State("empty quantizer trace".into()));
    };
    if upstream.iter().any(|u| u.len() != len) {
        return Err(TawqError::Shape("upstream gradient length differs from the stimulus".into()));
    }
    let lambda = cfg.lambda;
    let n = cfg.n_level as f64;
    let mut grad_in = vec![0.0; len];
    // adjoint of C[t+1] while processing step t
    let mut grad_next = vec![0.0; len];
    for t in (1..=steps).rev() {
        let c_t = &c_s[t];
        let w_t = &weights[t - 1];
        for e in 0..len {
            let (carry_c, carry_w) = if t < steps {
                // ∂C[t+1]/∂C[t] and ∂C[t+1]/∂W[t]
                (
                    lambda * (1.0 - w_t[e].abs() / n),
                    -lambda * c_t[e] * crate::layers::synapse::sign(w_t[e]) / n,
                )
            } else {
                (0.0, 0.0)
            };
            let g_w = upstream[t - 1][e] + grad_next[e] * carry_w;
            let g_c = grad_next[e] * carry_c + g_w * surrogate_scalar(c_t[e], cfg);
            grad_in[e] += (1.0 - lambda) * g_c;
            grad_next[e] = g_c;
        }
    }
    Ok(grad_in)
}

/// Backward for quantization without temporal dynamics, `W[t] = Q(I_n)`.
pub(crate) fn memoryless_backward(upstream: &[Vec<f64>], i_norm: &[f64], cfg: &QuantConfig) -> Vec<f64> {
    i_norm
        .iter()
        .enumerate()
        .map(|(e, &c)| {
            let g: f64 = upstream.iter().map(|u| u[e]).sum();
            g * surrogate_scalar(c, cfg)
        })
        .collect()
}

/// Jacobian-vector product through `I_n = (I − μ) / sqrt(σ² + ε)`.
pub fn normalization_backward(grad_norm: &[f64], i_norm: &[f64], stats: &NormStats) -> Vec<f64> {
    let n = grad_norm.len() as f64;
    let mean_g = grad_norm.iter().sum::<f64>() / n;
    let mean_gx = grad_norm.iter().zip(i_norm).map(|(g, x)| g * x).sum::<f64>() / n;
    grad_norm
        .iter()
        .zip(i_norm)
        .map(|(g, x)| (g - mean_g - x * mean_gx) / stats.denom)
        .collect()
}

/// Gradients for every trainable tensor, ordered like
/// [`Network::params_mut`].
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBundle {
    pub names: Vec<String>,
    pub grads: Vec<Vec<f64>>,
}

impl GradientBundle {
    pub fn norm(&self) -> f64 {
        self.grads
            .iter()
            .flat_map(|g| g.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, factor: f64) {
        self.grads.iter_mut().flatten().for_each(|v| *v *= factor);
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.grads[i].as_slice())
    }

    fn check_finite(&self) -> Result<()> {
        for (name, g) in self.names.iter().zip(&self.grads) {
            if g.iter().any(|v| !v.is_finite()) {
                return Err(TawqError::NonFinite {
                    what: "gradient".into(),
                    location: Location {
                        param: Some(name.clone()),
                        ..Location::default()
                    },
                });
            }
        }
        Ok(())
    }
}

/// Backpropagate `loss_grad`, the gradient with respect to the `(B, classes)`
/// logits, through a recorded forward pass.
pub fn backward_pass(net: &Network, traces: &Traces, loss_grad: &[f64]) -> Result<GradientBundle> {
    if traces.layers.len() != net.layers.len() {
        return Err(TawqError::State("traces do not match the network".into()));
    }
    let steps = net.timesteps;
    let out = traces.output();
    if loss_grad.len() != out.batch * out.sample_len() {
        return Err(TawqError::Shape("loss gradient does not match the logits".into()));
    }
    // logits are the mean over timesteps of the head output
    let mut grad = vec![0.0; out.data.len()];
    let block = loss_grad.len();
    for t in 0..steps {
        for (i, g) in loss_grad.iter().enumerate() {
            grad[t * block + i] = g / steps as f64;
        }
    }

    let mut per_layer: Vec<Vec<Vec<f64>>> = vec![Vec::new(); net.layers.len()];
    for idx in (0..net.layers.len()).rev() {
        let input = &traces.inputs[idx];
        let next = match (&net.layers[idx], &traces.layers[idx]) {
            (Layer::Synapse(s), LayerTrace::Synapse { weights, pre_alpha }) => {
                let (gx, gw) = s.backward(&input.data, pre_alpha, &grad, steps, weights);
                let g_param = match s.mode {
                    SynapseMode::FullPrecision => {
                        let mut acc = vec![0.0; s.param.len()];
                        for g in &gw {
                            acc.iter_mut().zip(g).for_each(|(a, v)| *a += v);
                        }
                        acc
                    }
                    mode => {
                        let q = weights
                            .quant
                            .as_ref()
                            .ok_or_else(|| TawqError::State(format!("layer {idx} quantizer trace")))?;
                        let cfg = QuantConfig {
                            timesteps: steps,
                            ..s.quant
                        };
                        let g_norm = if mode == SynapseMode::Tawq {
                            recurrence_backward(&gw, &q.c_s, &weights.weights, &cfg)?
                        } else {
                            memoryless_backward(&gw, &q.i_norm, &cfg)
                        };
                        normalization_backward(&g_norm, &q.i_norm, &q.stats)
                    }
                };
                per_layer[idx].push(g_param);
                gx
            }
            (Layer::BatchNorm(p), LayerTrace::BatchNorm(cache)) => {
                let cache = cache
                    .as_ref()
                    .ok_or_else(|| TawqError::State(format!("layer {idx}: batch-norm backward needs batch statistics")))?;
                let spatial: usize = input.shape[1..].iter().product();
                let (gx, gg, gb) = bn::bn_backward(p, cache, &grad, spatial);
                per_layer[idx].push(gg);
                per_layer[idx].push(gb);
                gx
            }
            (Layer::Lif(cfg), LayerTrace::Lif { charge, spikes }) => {
                lif::lif_backward(&grad, charge, spikes, steps, cfg)
            }
            (Layer::Pool(p), LayerTrace::Pool { picks }) => p.backward(&grad, picks),
            (Layer::Flatten, LayerTrace::Flatten) => grad,
            _ => return Err(TawqError::State(format!("layer {idx}: trace kind does not match layer"))),
        };
        grad = next;
    }
    let bundle = GradientBundle {
        names: net.param_names(),
        grads: per_layer.into_iter().flatten().collect(),
    };
    bundle.check_finite()?;
    Ok(bundle)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quant::tawq_forward;

    #[test]
    fn single_step_chain() {
        let cfg = QuantConfig {
            timesteps: 1,
            ..QuantConfig::default()
        };
        let s = tawq_forward(&[0.3, -0.9], &cfg).unwrap();
        let up = vec![vec![0.7, -1.1]];
        let g = tawq_backward(&up, &s, &cfg).unwrap();
        for e in 0..2 {
            let want = up[0][e] * surrogate_scalar(s.c_s[1][e], &cfg) * (1.0 - cfg.lambda);
            assert!((g[e] - want).abs() < 1e-15);
        }
    }

    #[test]
    fn zero_upstream_zero_gradient() {
        let cfg = QuantConfig::default();
        let s = tawq_forward(&[0.3, -0.2, 1.4], &cfg).unwrap();
        let g = tawq_backward(&vec![vec![0.0; 3]; 4], &s, &cfg).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn missing_trace_is_state_error() {
        let cfg = QuantConfig::default();
        let mut s = tawq_forward(&[0.3], &cfg).unwrap();
        s.c_s.pop();
        assert!(matches!(tawq_backward(&vec![vec![1.0]; 4], &s, &cfg), Err(TawqError::State(_))));
    }

    #[test]
    fn normalization_jacobian_matches_finite_differences() {
        let x = [0.3, -1.2, 2.0, 0.7, 0.1];
        let up = [0.5, -0.25, 1.0, 0.3, -0.8];
        let eps = 1e-5;
        let (xn, stats) = crate::quant::normalize_with_stats(&x, eps).unwrap();
        let g = normalization_backward(&up, &xn, &stats);
        let f = |v: &[f64]| -> f64 {
            let n = crate::quant::normalize_stimulus(v, eps).unwrap();
            n.iter().zip(&up).map(|(a, b)| a * b).sum()
        };
        for i in 0..x.len() {
            let h = 1e-6;
            let mut p = x;
            p[i] += h;
            let mut m = x;
            m[i] -= h;
            let fd = (f(&p) - f(&m)) / (2.0 * h);
            assert!((fd - g[i]).abs() < 1e-8, "{i}: {fd} vs {}", g[i]);
        }
    }
}
