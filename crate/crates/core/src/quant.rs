//! Temporal-adaptive weight quantization.
//!
//! A quantized layer does not own real-valued weights. It owns a stimulus
//! tensor `I`, which is normalized to zero mean and unit variance and then
//! drives a leaky recurrence on an intermediate state `C_s`:
//!
//! ```text
//! C_s[t+1] = λ · C_s[t] · (1 − |W_q[t]| / n) + (1 − λ) · I_n
//! W_q[t+1] = Q(C_s[t+1])
//! ```
//!
//! with `C_s[0] = 0` and `W_q[0] = 0`. For `n = 1`, `Q` is the ternary
//! threshold function with dead zone `[−C_th, +C_th]`; for `n > 1` it is
//! `round(clamp(C_s, −n, n))`. A weight that fires clears the carried state,
//! so small stimuli accumulate over several timesteps before they emit a
//! nonzero weight.
//!
//! Everything in this module is forward math over immutable inputs. Reverse
//! accumulation through the recurrence lives in [`crate::train`].

use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};

/// Quantizer hyperparameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuantConfig {
    /// Leak/mix coefficient λ of the recurrence.
    pub lambda: f64,
    /// Ternary threshold `C_th`.
    pub c_th: f64,
    /// Multi-bit level `n`; weights live in `{−n, …, +n}`.
    pub n_level: u32,
    pub timesteps: usize,
    /// Stabilizer inside the normalization square root.
    pub epsilon: f64,
    /// Steepness `k` of the sigmoid pair used as surrogate derivative.
    pub sg_scale: f64,
    /// Multiply the surrogate by the inner chain factor `k`.
    pub sg_chain_factor: bool,
}

impl Default for QuantConfig {
    fn default() -> Self {
        Self {
            lambda: 0.5,
            c_th: 0.25,
            n_level: 1,
            timesteps: 4,
            epsilon: 1e-5,
            sg_scale: 4.0,
            sg_chain_factor: false,
        }
    }
}

impl QuantConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(TawqError::Param(msg.to_string()));
        if !(self.lambda > 0.0 && self.lambda < 1.0) {
            return bad("lambda must lie in (0, 1)");
        }
        if !(self.c_th > 0.0) {
            return bad("c_th must be positive");
        }
        if self.n_level < 1 {
            return bad("n_level must be at least 1");
        }
        if self.timesteps < 1 {
            return bad("timesteps must be at least 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.sg_scale > 0.0) {
            return bad("sg_scale must be positive");
        }
        Ok(())
    }

    /// Effective storage bits of one weight, `log2(2n + 1)`.
    pub fn bit_width(&self) -> f64 {
        bit_width(self.n_level)
    }

    fn is_ternary(&self) -> bool {
        self.n_level == 1
    }
}

pub fn bit_width(n_level: u32) -> f64 {
    (2.0 * n_level as f64 + 1.0).log2()
}

/// Per-layer statistics of the stimulus tensor used by normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormStats {
    pub mean: f64,
    /// Population variance.
    pub var: f64,
    /// `sqrt(var + ε)`.
    pub denom: f64,
}

/// Normalize a stimulus tensor with scalar statistics taken over all entries.
pub fn normalize_stimulus(values: &[f64], epsilon: f64) -> Result<Vec<f64>> {
    normalize_with_stats(values, epsilon).map(|(v, _)| v)
}

pub fn normalize_with_stats(values: &[f64], epsilon: f64) -> Result<(Vec<f64>, NormStats)> {
    if values.is_empty() {
        return Err(TawqError::Shape("cannot normalize an empty stimulus tensor".into()));
    }
    if !(epsilon > 0.0) {
        return Err(TawqError::Param("epsilon must be positive".into()));
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let denom = (var + epsilon).sqrt();
    let out = values.iter().map(|v| (v - mean) / denom).collect();
    Ok((out, NormStats { mean, var, denom }))
}

/// Ternary threshold function with strict inequalities.
#[inline]
pub fn ternary(c_s: f64, c_th: f64) -> i32 {
    if c_s > c_th {
        1
    } else if c_s < -c_th {
        -1
    } else {
        0
    }
}

pub fn quantize_ternary(c_s: &[f64], c_th: f64) -> Vec<i32> {
    c_s.iter().map(|&c| ternary(c, c_th)).collect()
}

/// `round(clamp(c_s, −n, n))`, ties away from zero.
#[inline]
pub fn multibit(c_s: f64, n_level: u32) -> i32 {
    let n = n_level as f64;
    c_s.clamp(-n, n).round() as i32
}

pub fn quantize_multibit(c_s: &[f64], n_level: u32) -> Vec<i32> {
    c_s.iter().map(|&c| multibit(c, n_level)).collect()
}

#[inline]
fn quantize_scalar(c_s: f64, cfg: &QuantConfig) -> i32 {
    if cfg.is_ternary() {
        ternary(c_s, cfg.c_th)
    } else {
        multibit(c_s, cfg.n_level)
    }
}

/// Full forward history of one layer's quantizer.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizerState {
    pub i_norm: Vec<f64>,
    /// `T + 1` entries; `c_s[0]` is all zero.
    pub c_s: Vec<Vec<f64>>,
    /// `T` entries; `w_q[t]` is the weight used at timestep `t` (0-based),
    /// i.e. `W_q[t+1]` of the recurrence.
    pub w_q: Vec<Vec<i32>>,
}

impl QuantizerState {
    pub fn timesteps(&self) -> usize {
        self.w_q.len()
    }

    pub fn weights_f64(&self) -> Vec<Vec<f64>> {
        self.w_q
            .iter()
            .map(|w| w.iter().map(|&v| v as f64).collect())
            .collect()
    }
}

/// One step of the recurrence for a single element.
#[inline]
pub fn recurrence_step(c_prev: f64, w_prev: f64, i_norm: f64, cfg: &QuantConfig) -> f64 {
    let n = cfg.n_level as f64;
    cfg.lambda * c_prev * (1.0 - w_prev.abs() / n) + (1.0 - cfg.lambda) * i_norm
}

/// Run the temporal recurrence for `cfg.timesteps` steps.
pub fn tawq_forward(i_norm: &[f64], cfg: &QuantConfig) -> Result<QuantizerState> {
    cfg.validate()?;
    if let Some(pos) = i_norm.iter().position(|v| !v.is_finite()) {
        return Err(TawqError::Param(format!("non-finite normalized stimulus at index {pos}")));
    }
    let len = i_norm.len();
    let mut c_s = Vec::with_capacity(cfg.timesteps + 1);
    let mut w_q: Vec<Vec<i32>> = Vec::with_capacity(cfg.timesteps);
    c_s.push(vec![0.0; len]);
    let zero = vec![0i32; len];
    for t in 0..cfg.timesteps {
        let c_prev = &c_s[t];
        let w_prev = if t == 0 { &zero } else { &w_q[t - 1] };
        let c_next: Vec<f64> = c_prev
            .iter()
            .zip(w_prev)
            .zip(i_norm)
            .map(|((&c, &w), &i)| recurrence_step(c, w as f64, i, cfg))
            .collect();
        if c_next.iter().any(|v| !v.is_finite()) {
            return Err(TawqError::non_finite_at_step("quantizer state", t + 1));
        }
        let w_next = c_next.iter().map(|&c| quantize_scalar(c, cfg)).collect();
        c_s.push(c_next);
        w_q.push(w_next);
    }
    Ok(QuantizerState {
        i_norm: i_norm.to_vec(),
        c_s,
        w_q,
    })
}

/// Quantization without temporal dynamics: every timestep uses `Q(I_n)`.
///
/// The state is reported with `c_s[t] = I_n` for `t ≥ 1`.
pub fn memoryless_forward(i_norm: &[f64], cfg: &QuantConfig) -> Result<QuantizerState> {
    cfg.validate()?;
    if let Some(pos) = i_norm.iter().position(|v| !v.is_finite()) {
        return Err(TawqError::Param(format!("non-finite normalized stimulus at index {pos}")));
    }
    let w: Vec<i32> = i_norm.iter().map(|&c| quantize_scalar(c, cfg)).collect();
    let mut c_s = vec![vec![0.0; i_norm.len()]];
    c_s.extend(std::iter::repeat_n(i_norm.to_vec(), cfg.timesteps));
    Ok(QuantizerState {
        i_norm: i_norm.to_vec(),
        c_s,
        w_q: vec![w; cfg.timesteps],
    })
}

#[inline]
fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

#[inline]
pub(crate) fn sigmoid_prime(x: f64) -> f64 {
    let s = sigmoid(x);
    s * (1.0 - s)
}

/// Surrogate derivative `∂W_q/∂C_s` for one element.
#[inline]
pub fn surrogate_scalar(c_s: f64, cfg: &QuantConfig) -> f64 {
    if cfg.is_ternary() {
        let k = cfg.sg_scale;
        let g = 0.5 * (sigmoid_prime(k * (c_s + cfg.c_th)) + sigmoid_prime(k * (c_s - cfg.c_th)));
        if cfg.sg_chain_factor {
            k * g
        } else {
            g
        }
    } else {
        let n = cfg.n_level as f64;
        if c_s > -n && c_s < n {
            1.0
        } else {
            0.0
        }
    }
}

pub fn surrogate_grad(c_s: &[f64], cfg: &QuantConfig) -> Vec<f64> {
    c_s.iter().map(|&c| surrogate_scalar(c, cfg)).collect()
}

/// Smooth stand-in for the quantizer whose exact derivative equals
/// [`surrogate_scalar`]. Used only for finite-difference validation.
#[inline]
pub fn relaxed_quantize(c_s: f64, cfg: &QuantConfig) -> f64 {
    if cfg.is_ternary() {
        let k = cfg.sg_scale;
        let pair = sigmoid(k * (c_s + cfg.c_th)) + sigmoid(k * (c_s - cfg.c_th)) - 1.0;
        if cfg.sg_chain_factor {
            0.5 * pair
        } else {
            pair / (2.0 * k)
        }
    } else {
        let n = cfg.n_level as f64;
        c_s.clamp(-n, n)
    }
}

/// Forward trace of the relaxed quantizer: real-valued weights per step.
#[derive(Debug, Clone, PartialEq)]
pub struct RelaxedState {
    pub c_s: Vec<Vec<f64>>,
    pub w: Vec<Vec<f64>>,
}

pub fn relaxed_forward(i_norm: &[f64], cfg: &QuantConfig, temporal: bool) -> Result<RelaxedState> {
    cfg.validate()?;
    let len = i_norm.len();
    let mut c_s = vec![vec![0.0; len]];
    let mut w: Vec<Vec<f64>> = Vec::with_capacity(cfg.timesteps);
    for t in 0..cfg.timesteps {
        let c_next: Vec<f64> = if temporal {
            let zero = vec![0.0; len];
            let w_prev = if t == 0 { &zero } else { &w[t - 1] };
            c_s[t]
                .iter()
                .zip(w_prev)
                .zip(i_norm)
                .map(|((&c, &wp), &i)| recurrence_step(c, wp, i, cfg))
                .collect()
        } else {
            i_norm.to_vec()
        };
        w.push(c_next.iter().map(|&c| relaxed_quantize(c, cfg)).collect());
        c_s.push(c_next);
    }
    Ok(RelaxedState { c_s, w })
}

/// Temporal-wise scaling factor: `α[t, c]` for all timesteps and channels.
#[derive(Debug, Clone, PartialEq)]
pub struct ScalingFactor {
    pub timesteps: usize,
    pub channels: usize,
    /// Row-major `(T, C_o)`.
    pub alpha: Vec<f64>,
}

impl ScalingFactor {
    pub fn ones(timesteps: usize, channels: usize) -> Self {
        Self {
            timesteps,
            channels,
            alpha: vec![1.0; timesteps * channels],
        }
    }

    pub fn at(&self, t: usize) -> &[f64] {
        &self.alpha[t * self.channels..(t + 1) * self.channels]
    }
}

/// Reciprocal of the mean absolute weight per output channel.
///
/// `weights` is one timestep's tensor laid out `(C_o, fan_in)`. Channels whose
/// weights are all zero get `α = 0`.
pub fn compute_scaling<W: Copy + Into<f64>>(weights: &[W], out_channels: usize) -> Vec<f64> {
    let fan_in = weights.len() / out_channels.max(1);
    weights
        .chunks(fan_in.max(1))
        .take(out_channels)
        .map(|row| {
            let mean = row.iter().map(|&w| w.into().abs()).sum::<f64>() / fan_in as f64;
            if mean == 0.0 {
                0.0
            } else {
                1.0 / mean
            }
        })
        .collect()
}

pub fn compute_scaling_all(state_w: &[Vec<i32>], out_channels: usize) -> ScalingFactor {
    let alpha = state_w
        .iter()
        .flat_map(|w| compute_scaling(w, out_channels))
        .collect();
    ScalingFactor {
        timesteps: state_w.len(),
        channels: out_channels,
        alpha,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(t: usize) -> QuantConfig {
        QuantConfig {
            timesteps: t,
            ..QuantConfig::default()
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_stimulus(&[1.0; 4], 1e-5).unwrap(), vec![0.0; 4]);
        let v = normalize_stimulus(&[-1.0, 1.0], 1e-300).unwrap();
        assert!((v[0] + 1.0).abs() < 1e-12 && (v[1] - 1.0).abs() < 1e-12);
        // mean 1.5, population variance 1.25
        let v = normalize_stimulus(&[0.0, 1.0, 2.0, 3.0], 1e-5).unwrap();
        let expect = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (a, b) in v.iter().zip(expect) {
            assert!((a - b).abs() < 1e-4, "{a} vs {b}");
        }
        assert!(matches!(normalize_stimulus(&[], 1e-5), Err(TawqError::Shape(_))));
    }

    #[test]
    fn ternary_branches() {
        assert_eq!(ternary(0.30, 0.25), 1);
        assert_eq!(ternary(0.0, 0.7), 0);
        assert_eq!(ternary(-0.50, 0.25), -1);
        assert_eq!(ternary(0.25, 0.25), 0);
        assert_eq!(ternary(-0.25, 0.25), 0);
    }

    #[test]
    fn multibit_rounding() {
        assert_eq!(multibit(2.7, 2), 2);
        assert_eq!(multibit(-0.4, 4), 0);
        assert_eq!(multibit(1.5, 4), 2);
        assert_eq!(multibit(-1.5, 4), -2);
        assert_eq!(multibit(-9.0, 8), -8);
    }

    #[test]
    fn constant_fire_trace() {
        let s = tawq_forward(&[0.6], &cfg(4)).unwrap();
        let cs: Vec<f64> = s.c_s[1..].iter().map(|c| c[0]).collect();
        assert_eq!(cs, vec![0.3; 4]);
        assert_eq!(s.w_q.iter().map(|w| w[0]).collect::<Vec<_>>(), vec![1; 4]);
    }

    #[test]
    fn period_three_trace() {
        let s = tawq_forward(&[0.3], &cfg(6)).unwrap();
        let expect = [0.15, 0.225, 0.2625, 0.15, 0.225, 0.2625];
        for (c, e) in s.c_s[1..].iter().zip(expect) {
            assert!((c[0] - e).abs() < 1e-15);
        }
        assert_eq!(
            s.w_q.iter().map(|w| w[0]).collect::<Vec<_>>(),
            vec![0, 0, 1, 0, 0, 1]
        );
    }

    #[test]
    fn zero_stimulus_is_fixed_point() {
        let s = tawq_forward(&[0.0; 5], &cfg(8)).unwrap();
        assert!(s.c_s.iter().flatten().all(|&c| c == 0.0));
        assert!(s.w_q.iter().flatten().all(|&w| w == 0));
    }

    #[test]
    fn nonfinite_stimulus_rejected() {
        assert!(tawq_forward(&[f64::NAN], &cfg(2)).is_err());
    }

    #[test]
    fn surrogate_values() {
        let c = cfg(4);
        let s1 = 1.0 / (1.0 + (-1.0f64).exp());
        let d1 = s1 * (1.0 - s1);
        assert!((surrogate_scalar(0.0, &c) - d1).abs() < 1e-15);
        assert!((surrogate_scalar(0.0, &c) - 0.19661).abs() < 1e-5);
        let s2 = 1.0 / (1.0 + (-2.0f64).exp());
        let at_th = 0.5 * (s2 * (1.0 - s2) + 0.25);
        assert!((surrogate_scalar(0.25, &c) - at_th).abs() < 1e-15);
        assert!((surrogate_scalar(-0.25, &c) - at_th).abs() < 1e-15);
        let m = QuantConfig { n_level: 2, ..c };
        assert_eq!(surrogate_scalar(0.5, &m), 1.0);
        assert_eq!(surrogate_scalar(2.5, &m), 0.0);
        let chained = QuantConfig { sg_chain_factor: true, ..c };
        assert!((surrogate_scalar(0.0, &chained) - 4.0 * d1).abs() < 1e-15);
    }

    #[test]
    fn relaxed_derivative_is_surrogate() {
        for chain in [false, true] {
            for n in [1, 3] {
                let c = QuantConfig { sg_chain_factor: chain, n_level: n, ..cfg(4) };
                for x in [-1.3, -0.4, -0.1, 0.05, 0.27, 0.9, 2.2] {
                    let h = 1e-6;
                    let fd = (relaxed_quantize(x + h, &c) - relaxed_quantize(x - h, &c)) / (2.0 * h);
                    assert!((fd - surrogate_scalar(x, &c)).abs() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn scaling_examples() {
        assert_eq!(compute_scaling(&[1, -1, 1, -1], 1), vec![1.0]);
        assert_eq!(compute_scaling(&[1, 0, -1, 0], 1), vec![2.0]);
        assert_eq!(compute_scaling(&[0, 0, 0, 0, 1, 1], 3), vec![0.0, 0.0, 1.0]);
    }

    #[test]
    fn bit_widths() {
        let got: Vec<String> = [1, 2, 4, 8].iter().map(|&n| format!("{:.2}", bit_width(n))).collect();
        assert_eq!(got, ["1.58", "2.32", "3.17", "4.09"]);
    }

    #[test]
    fn config_validation() {
        assert!(QuantConfig::default().validate().is_ok());
        assert!(QuantConfig { lambda: 1.0, ..Default::default() }.validate().is_err());
        assert!(QuantConfig { c_th: 0.0, ..Default::default() }.validate().is_err());
        assert!(QuantConfig { n_level: 0, ..Default::default() }.validate().is_err());
        assert!(QuantConfig { timesteps: 0, ..Default::default() }.validate().is_err());
    }
}
