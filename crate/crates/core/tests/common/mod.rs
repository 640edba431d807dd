//! Independent oracles and fixtures shared by the integration tests.
#![allow(dead_code)]

pub mod invariants;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tawq::layers::{BuildOptions, LayerSpec, LifConfig, PoolMode, Precision};
use tawq::train::{backward_pass, cross_entropy};
use tawq::{network_forward, Activation, ForwardOptions, Network, QuantConfig};

/// Scalar-loop recurrence, one element at a time.
pub fn oracle_tawq(i_norm: &[f64], lambda: f64, c_th: f64, n: u32, steps: usize) -> (Vec<Vec<f64>>, Vec<Vec<i32>>) {
    let nf = n as f64;
    let mut c = vec![vec![0.0; i_norm.len()]; steps + 1];
    let mut w = vec![vec![0i32; i_norm.len()]; steps];
    for e in 0..i_norm.len() {
        let mut c_prev = 0.0f64;
        let mut w_prev = 0i32;
        for t in 0..steps {
            let c_new = lambda * c_prev * (1.0 - (w_prev.abs() as f64) / nf) + (1.0 - lambda) * i_norm[e];
            let w_new = if n == 1 {
                if c_new > c_th {
                    1
                } else if c_new < -c_th {
                    -1
                } else {
                    0
                }
            } else {
                let clamped = c_new.max(-nf).min(nf);
                let r = clamped.abs().floor() + if clamped.abs().fract() >= 0.5 { 1.0 } else { 0.0 };
                (r * clamped.signum()) as i32
            };
            c[t + 1][e] = c_new;
            w[t][e] = w_new;
            c_prev = c_new;
            w_prev = w_new;
        }
    }
    (c, w)
}

fn sigmoid_prime(x: f64) -> f64 {
    let s = 1.0 / (1.0 + (-x).exp());
    s * (1.0 - s)
}

/// Surrogate written out from its definition.
pub fn oracle_surrogate(c: f64, cfg: &QuantConfig) -> f64 {
    if cfg.n_level == 1 {
        let k = cfg.sg_scale;
        let g = 0.5 * (sigmoid_prime(k * (c + cfg.c_th)) + sigmoid_prime(k * (c - cfg.c_th)));
        if cfg.sg_chain_factor {
            k * g
        } else {
            g
        }
    } else if c.abs() < cfg.n_level as f64 {
        1.0
    } else {
        0.0
    }
}

/// The unrolled double-sum expansion of `∂L/∂I_n`:
/// `Σ_t g_t s_t (∂C[t]/∂I_n + Σ_{j<t} Π_{i=1}^{t−j} A[t−i+1] ∂C[j]/∂I_n)` with
/// `A[k] = ∂C[k]/∂C[k−1] + ∂C[k]/∂W[k−1] · s_{k−1}`.
///
/// `c[t]` for `t = 0..=T`, `w[t − 1]` is the weight produced from `c[t]`.
pub fn literal_gradient(upstream: &[Vec<f64>], c: &[Vec<f64>], w: &[Vec<i32>], cfg: &QuantConfig) -> Vec<f64> {
    let steps = w.len();
    let lambda = cfg.lambda;
    let n = cfg.n_level as f64;
    let len = c[0].len();
    let mut out = vec![0.0; len];
    for e in 0..len {
        let s = |t: usize| oracle_surrogate(c[t][e], cfg);
        let a = |k: usize| {
            let wk = w[k - 2][e] as f64;
            let dc_dc = lambda * (1.0 - wk.abs() / n);
            let dc_dw = -lambda * c[k - 1][e] * wk.signum() * if wk == 0.0 { 0.0 } else { 1.0 } / n;
            dc_dc + dc_dw * s(k - 1)
        };
        let local = 1.0 - lambda;
        let mut total = 0.0;
        for t in 1..=steps {
            let mut inner = local;
            for j in 1..t {
                let mut prod = 1.0;
                for i in 1..=(t - j) {
                    prod *= a(t - i + 1);
                }
                inner += prod * local;
            }
            total += upstream[t - 1][e] * s(t) * inner;
        }
        out[e] = total;
    }
    out
}

/// `|a − b| / max(|a|, |b|)`, zero when both vanish.
pub fn rel_err(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`.
pub fn rel_err_vec(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    let scale = na.max(nb);
    if scale == 0.0 {
        0.0
    } else {
        d / scale
    }
}

pub fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    if v.len() % 2 == 1 {
        v[m]
    } else {
        0.5 * (v[m - 1] + v[m])
    }
}

pub fn xor_specs(hidden: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Qlinear {
            out_features: hidden,
            quantize: None,
        },
        LayerSpec::Bn,
        LayerSpec::Lif,
        LayerSpec::Qlinear {
            out_features: 2,
            quantize: None,
        },
    ]
}

pub fn conv_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Qconv {
            out_channels: 3,
            kernel: 3,
            stride: 1,
            padding: 1,
            quantize: None,
        },
        LayerSpec::Bn,
        LayerSpec::Lif,
        LayerSpec::Pool {
            mode: PoolMode::Avg,
            kernel: 2,
        },
        LayerSpec::Qconv {
            out_channels: 4,
            kernel: 3,
            stride: 1,
            padding: 0,
            quantize: None,
        },
        LayerSpec::Bn,
        LayerSpec::Lif,
        LayerSpec::Flatten,
        LayerSpec::Qlinear {
            out_features: 3,
            quantize: None,
        },
    ]
}

pub fn options(precision: Precision, quantize_first: bool, ablate_temporal: bool) -> BuildOptions {
    BuildOptions {
        precision,
        quantize_first,
        ablate_temporal,
        quant: QuantConfig::default(),
        lif: LifConfig::default(),
    }
}

pub fn build(input: &[usize], steps: usize, specs: &[LayerSpec], opts: &BuildOptions, seed: u64) -> Network {
    Network::build(input, steps, specs, opts, &mut ChaCha8Rng::seed_from_u64(seed)).unwrap()
}

pub const RELAXED_TRAIN: ForwardOptions = ForwardOptions {
    train: true,
    relaxed: true,
};

pub fn relaxed_loss(net: &Network, x: &Activation, labels: &[usize]) -> f64 {
    let (logits, _) = network_forward(net, x, RELAXED_TRAIN).unwrap();
    cross_entropy(&logits, labels, net.classes()).0
}

/// Worst per-tensor relative error between backprop and central differences.
pub fn finite_difference_check(mut net: Network, x: &Activation, labels: &[usize]) -> Vec<(String, f64)> {
    let (logits, traces) = network_forward(&net, x, RELAXED_TRAIN).unwrap();
    let (_, grad) = cross_entropy(&logits, labels, net.classes());
    let grads = backward_pass(&net, &traces, &grad).unwrap();
    let h = 1e-4;
    let names = net.param_names();
    let mut out = Vec::new();
    for (k, name) in names.iter().enumerate() {
        let len = net.param_values()[k].len();
        let mut fd = Vec::with_capacity(len);
        for i in 0..len {
            let orig = net.param_values()[k][i];
            net.params_mut()[k].1[i] = orig + h;
            let up = relaxed_loss(&net, x, labels);
            net.params_mut()[k].1[i] = orig - h;
            let down = relaxed_loss(&net, x, labels);
            net.params_mut()[k].1[i] = orig;
            fd.push((up - down) / (2.0 * h));
        }
        out.push((name.clone(), rel_err_vec(&fd, &grads.grads[k])));
    }
    out
}

pub fn random_input(steps: usize, batch: usize, shape: Vec<usize>, seed: u64) -> Activation {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let len: usize = shape.iter().product();
    let data = (0..steps * batch * len).map(|_| if rng.gen_bool(0.4) { 1.0 } else { 0.0 }).collect();
    Activation::new(steps, batch, shape, data).unwrap()
}

