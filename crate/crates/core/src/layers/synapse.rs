//! Convolution and fully connected layers, full precision or quantized.

use rand::Rng;
use rayon::prelude::*;

use crate::error::{Result, TawqError};
use crate::quant::{
    compute_scaling, memoryless_forward, normalize_with_stats, relaxed_forward, tawq_forward, NormStats,
    QuantConfig, ScalingFactor,
};

/// Shape of a synaptic layer. A fully connected layer is a 1×1 convolution
/// over a 1×1 map.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Geometry {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub padding: usize,
    pub in_h: usize,
    pub in_w: usize,
    pub conv: bool,
}

impl Geometry {
    pub fn linear(in_features: usize, out_features: usize) -> Self {
        Self {
            in_channels: in_features,
            out_channels: out_features,
            kernel: 1,
            stride: 1,
            padding: 0,
            in_h: 1,
            in_w: 1,
            conv: false,
        }
    }

    pub fn conv(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        in_h: usize,
        in_w: usize,
    ) -> Result<Self> {
        let g = Self {
            in_channels,
            out_channels,
            kernel,
            stride,
            padding,
            in_h,
            in_w,
            conv: true,
        };
        if kernel == 0 || stride == 0 || in_h + 2 * padding < kernel || in_w + 2 * padding < kernel {
            return Err(TawqError::Shape(format!(
                "kernel {kernel} stride {stride} padding {padding} does not fit a {in_h}x{in_w} map"
            )));
        }
        Ok(g)
    }

    pub fn out_h(&self) -> usize {
        (self.in_h + 2 * self.padding - self.kernel) / self.stride + 1
    }

    pub fn out_w(&self) -> usize {
        (self.in_w + 2 * self.padding - self.kernel) / self.stride + 1
    }

    /// Weights per output channel, `C_i · k_h · k_w`.
    pub fn fan_in(&self) -> usize {
        self.in_channels * self.kernel * self.kernel
    }

    pub fn positions(&self) -> usize {
        self.out_h() * self.out_w()
    }

    pub fn in_len(&self) -> usize {
        self.in_channels * self.in_h * self.in_w
    }

    pub fn out_len(&self) -> usize {
        self.out_channels * self.positions()
    }

    pub fn weight_len(&self) -> usize {
        self.out_channels * self.fan_in()
    }

    pub fn out_shape(&self) -> Vec<usize> {
        if self.conv {
            vec![self.out_channels, self.out_h(), self.out_w()]
        } else {
            vec![self.out_channels]
        }
    }

    /// Synaptic operations of one dense pass over one sample.
    pub fn dense_ops(&self) -> usize {
        self.weight_len() * self.positions()
    }

    /// Unfold one sample into a `(fan_in, positions)` patch matrix.
    pub(crate) fn im2col(&self, x: &[f64]) -> Vec<f64> {
        if !self.conv {
            return x.to_vec();
        }
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let p_n = oh * ow;
        let mut cols = vec![0.0; self.fan_in() * p_n];
        for ci in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            cols[row * p_n + oy * ow + ox] =
                                x[(ci * self.in_h + iy as usize) * self.in_w + ix as usize];
                        }
                    }
                }
            }
        }
        cols
    }

    /// Adjoint of [`Geometry::im2col`].
    pub(crate) fn col2im(&self, cols: &[f64]) -> Vec<f64> {
        if !self.conv {
            return cols.to_vec();
        }
        let (oh, ow, k) = (self.out_h(), self.out_w(), self.kernel);
        let p_n = oh * ow;
        let mut x = vec![0.0; self.in_len()];
        for ci in 0..self.in_channels {
            for ky in 0..k {
                for kx in 0..k {
                    let row = (ci * k + ky) * k + kx;
                    for oy in 0..oh {
                        let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                        if iy < 0 || iy >= self.in_h as isize {
                            continue;
                        }
                        for ox in 0..ow {
                            let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                            if ix < 0 || ix >= self.in_w as isize {
                                continue;
                            }
                            x[(ci * self.in_h + iy as usize) * self.in_w + ix as usize] +=
                                cols[row * p_n + oy * ow + ox];
                        }
                    }
                }
            }
        }
        x
    }
}

/// `z[c, p] = Σ_k W[c, k] · cols[k, p]`.
pub(crate) fn weight_product(weights: &[f64], cols: &[f64], g: &Geometry) -> Vec<f64> {
    let (k_n, p_n) = (g.fan_in(), g.positions());
    let mut z = vec![0.0; g.out_channels * p_n];
    for c in 0..g.out_channels {
        let row = &weights[c * k_n..(c + 1) * k_n];
        for p in 0..p_n {
            let mut acc = 0.0;
            for (k, &w) in row.iter().enumerate() {
                acc += w * cols[k * p_n + p];
            }
            z[c * p_n + p] = acc;
        }
    }
    z
}

/// Quantized convolution for one sample at one timestep:
/// `X_o = α ⊙ (W_q ⊗ X_i)`, integer weights accumulated first and scaled per
/// output channel afterwards.
pub fn qconv_forward(x: &[f64], w_q: &[i32], alpha: &[f64], g: &Geometry) -> Result<Vec<f64>> {
    if x.len() != g.in_len() {
        return Err(TawqError::Shape(format!("input has {} entries, expected {}", x.len(), g.in_len())));
    }
    if w_q.len() != g.weight_len() {
        return Err(TawqError::Shape(format!(
            "weights have {} entries, expected {}",
            w_q.len(),
            g.weight_len()
        )));
    }
    if alpha.len() != g.out_channels {
        return Err(TawqError::Shape(format!(
            "scaling has {} entries, expected {}",
            alpha.len(),
            g.out_channels
        )));
    }
    let w: Vec<f64> = w_q.iter().map(|&v| v as f64).collect();
    let mut z = weight_product(&w, &g.im2col(x), g);
    let p_n = g.positions();
    for (c, a) in alpha.iter().enumerate() {
        z[c * p_n..(c + 1) * p_n].iter_mut().for_each(|v| *v *= a);
    }
    Ok(z)
}

/// How a synaptic layer turns its parameter into per-timestep weights.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SynapseMode {
    /// The parameter is the weight, shared by all timesteps.
    FullPrecision,
    /// The parameter is a stimulus driving the temporal quantizer.
    Tawq,
    /// The parameter is a stimulus quantized without temporal dynamics.
    Memoryless,
}

impl SynapseMode {
    pub fn is_quantized(self) -> bool {
        !matches!(self, SynapseMode::FullPrecision)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynapticLayer {
    pub geometry: Geometry,
    pub mode: SynapseMode,
    /// Weight (full precision) or stimulus `I`, laid out `(C_o, fan_in)`.
    pub param: Vec<f64>,
    pub quant: QuantConfig,
}

/// Quantizer internals retained for the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantTrace {
    pub stats: NormStats,
    pub i_norm: Vec<f64>,
    pub c_s: Vec<Vec<f64>>,
    /// Integer weights; absent in relaxed mode.
    pub w_q: Option<Vec<Vec<i32>>>,
}

/// Effective weights of a layer for one forward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightTrace {
    /// Per-timestep `(C_o, fan_in)` weights.
    pub weights: Vec<Vec<f64>>,
    pub alpha: ScalingFactor,
    pub quant: Option<QuantTrace>,
}

impl SynapticLayer {
    /// Kaiming-uniform initialization with fan-in scaling.
    pub fn init<R: Rng>(geometry: Geometry, mode: SynapseMode, quant: QuantConfig, rng: &mut R) -> Self {
        let bound = (6.0 / geometry.fan_in() as f64).sqrt();
        let param = (0..geometry.weight_len()).map(|_| rng.gen_range(-bound..bound)).collect();
        Self {
            geometry,
            mode,
            param,
            quant,
        }
    }

    pub fn param_name(&self) -> &'static str {
        if self.mode.is_quantized() {
            "stimulus"
        } else {
            "weight"
        }
    }

    pub fn weights(&self, timesteps: usize, relaxed: bool) -> Result<WeightTrace> {
        let g = &self.geometry;
        if self.mode == SynapseMode::FullPrecision {
            return Ok(WeightTrace {
                weights: vec![self.param.clone(); timesteps],
                alpha: ScalingFactor::ones(timesteps, g.out_channels),
                quant: None,
            });
        }
        let cfg = QuantConfig {
            timesteps,
            ..self.quant
        };
        let (i_norm, stats) = normalize_with_stats(&self.param, cfg.epsilon)?;
        let temporal = self.mode == SynapseMode::Tawq;
        let (c_s, weights, w_q) = if relaxed {
            let s = relaxed_forward(&i_norm, &cfg, temporal)?;
            (s.c_s, s.w, None)
        } else {
            let s = if temporal {
                tawq_forward(&i_norm, &cfg)?
            } else {
                memoryless_forward(&i_norm, &cfg)?
            };
            let w = s.weights_f64();
            (s.c_s, w, Some(s.w_q))
        };
        let alpha = weights
            .iter()
            .flat_map(|w| compute_scaling(w, g.out_channels))
            .collect();
        Ok(WeightTrace {
            weights,
            alpha: ScalingFactor {
                timesteps,
                channels: g.out_channels,
                alpha,
            },
            quant: Some(QuantTrace {
                stats,
                i_norm,
                c_s,
                w_q,
            }),
        })
    }

    /// Forward over a `(T, B, in_len)` block. Returns `(output, pre_alpha)`.
    pub(crate) fn forward(&self, x: &[f64], steps: usize, wt: &WeightTrace) -> (Vec<f64>, Vec<f64>) {
        let g = &self.geometry;
        let (in_len, out_len) = (g.in_len(), g.out_len());
        let samples = x.len() / in_len;
        let batch = samples / steps;
        let p_n = g.positions();
        let mut z = vec![0.0; samples * out_len];
        z.par_chunks_mut(out_len).enumerate().for_each(|(s, out)| {
            let t = s / batch;
            let cols = g.im2col(&x[s * in_len..(s + 1) * in_len]);
            out.copy_from_slice(&weight_product(&wt.weights[t], &cols, g));
        });
        let mut y = z.clone();
        y.par_chunks_mut(out_len).enumerate().for_each(|(s, out)| {
            let alpha = wt.alpha.at(s / batch);
            for (c, a) in alpha.iter().enumerate() {
                out[c * p_n..(c + 1) * p_n].iter_mut().for_each(|v| *v *= a);
            }
        });
        (y, z)
    }

    /// Backward over a `(T, B, out_len)` gradient block.
    ///
    /// Returns the input gradient and the per-timestep gradient with respect
    /// to the effective weights, including the path through `α`.
    pub(crate) fn backward(
        &self,
        x: &[f64],
        pre_alpha: &[f64],
        grad_y: &[f64],
        steps: usize,
        wt: &WeightTrace,
    ) -> (Vec<f64>, Vec<Vec<f64>>) {
        let g = &self.geometry;
        let (in_len, out_len, k_n, p_n) = (g.in_len(), g.out_len(), g.fan_in(), g.positions());
        let samples = x.len() / in_len;
        let batch = samples / steps;
        let scaled_grad = |s: usize| -> Vec<f64> {
            let alpha = wt.alpha.at(s / batch);
            let gy = &grad_y[s * out_len..(s + 1) * out_len];
            gy.iter().enumerate().map(|(i, v)| v * alpha[i / p_n]).collect()
        };

        let mut grad_x = vec![0.0; x.len()];
        grad_x.par_chunks_mut(in_len).enumerate().for_each(|(s, gx)| {
            let w = &wt.weights[s / batch];
            let gz = scaled_grad(s);
            let mut gcols = vec![0.0; k_n * p_n];
            for c in 0..g.out_channels {
                let row = &w[c * k_n..(c + 1) * k_n];
                for (k, &wv) in row.iter().enumerate() {
                    if wv == 0.0 {
                        continue;
                    }
                    for p in 0..p_n {
                        gcols[k * p_n + p] += wv * gz[c * p_n + p];
                    }
                }
            }
            gx.copy_from_slice(&g.col2im(&gcols));
        });

        let quantized = self.mode.is_quantized();
        let grad_w: Vec<Vec<f64>> = (0..steps)
            .into_par_iter()
            .map(|t| {
                let mut gw = vec![0.0; g.weight_len()];
                let mut g_alpha = vec![0.0; g.out_channels];
                for b in 0..batch {
                    let s = t * batch + b;
                    let cols = g.im2col(&x[s * in_len..(s + 1) * in_len]);
                    let gz = scaled_grad(s);
                    for c in 0..g.out_channels {
                        for p in 0..p_n {
                            let gv = gz[c * p_n + p];
                            if gv == 0.0 {
                                continue;
                            }
                            let row = &mut gw[c * k_n..(c + 1) * k_n];
                            for (k, r) in row.iter_mut().enumerate() {
                                *r += gv * cols[k * p_n + p];
                            }
                        }
                    }
                    if quantized {
                        let gy = &grad_y[s * out_len..(s + 1) * out_len];
                        let zs = &pre_alpha[s * out_len..(s + 1) * out_len];
                        for (i, (gv, zv)) in gy.iter().zip(zs).enumerate() {
                            g_alpha[i / p_n] += gv * zv;
                        }
                    }
                }
                if quantized {
                    // α = 1 / mean|W|  ⇒  ∂α/∂W = −α² · sign(W) / fan_in
                    let alpha = wt.alpha.at(t);
                    let w = &wt.weights[t];
                    for c in 0..g.out_channels {
                        if alpha[c] == 0.0 {
                            continue;
                        }
                        let coef = -g_alpha[c] * alpha[c] * alpha[c] / k_n as f64;
                        for k in 0..k_n {
                            let wv = w[c * k_n + k];
                            gw[c * k_n + k] += coef * sign(wv);
                        }
                    }
                }
                gw
            })
            .collect();
        (grad_x, grad_w)
    }
}

#[inline]
pub(crate) fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_identity_and_cancellation() {
        let g = Geometry::linear(1, 1);
        assert_eq!(qconv_forward(&[1.0], &[1], &[1.0], &g).unwrap(), vec![1.0]);
        let g = Geometry::linear(2, 1);
        assert_eq!(qconv_forward(&[1.0, 1.0], &[1, -1], &[1.0], &g).unwrap(), vec![0.0]);
    }

    #[test]
    fn scaled_three_input() {
        let g = Geometry::linear(3, 1);
        let w = [1, 0, -1];
        let alpha = compute_scaling(&w, 1);
        assert!((alpha[0] - 1.5).abs() < 1e-15);
        let y = qconv_forward(&[1.0, 1.0, 0.0], &w, &alpha, &g).unwrap();
        assert!((y[0] - 1.5).abs() < 1e-15);
    }

    #[test]
    fn conv_one_by_one() {
        let g = Geometry::conv(1, 1, 1, 1, 0, 1, 1).unwrap();
        assert_eq!(qconv_forward(&[1.0], &[1], &[1.0], &g).unwrap(), vec![1.0]);
    }

    #[test]
    fn conv_shapes() {
        let g = Geometry::conv(2, 3, 3, 1, 1, 5, 5).unwrap();
        assert_eq!((g.out_h(), g.out_w()), (5, 5));
        let g = Geometry::conv(2, 3, 3, 2, 0, 7, 7).unwrap();
        assert_eq!((g.out_h(), g.out_w()), (3, 3));
        assert!(Geometry::conv(1, 1, 5, 1, 0, 3, 3).is_err());
    }

    #[test]
    fn shape_errors() {
        let g = Geometry::linear(3, 2);
        assert!(qconv_forward(&[1.0; 2], &[0; 6], &[1.0; 2], &g).is_err());
        assert!(qconv_forward(&[1.0; 3], &[0; 5], &[1.0; 2], &g).is_err());
        assert!(qconv_forward(&[1.0; 3], &[0; 6], &[1.0; 1], &g).is_err());
    }

    #[test]
    fn col2im_is_adjoint() {
        let g = Geometry::conv(2, 1, 3, 2, 1, 5, 4).unwrap();
        let x: Vec<f64> = (0..g.in_len()).map(|i| (i as f64 * 0.37).sin()).collect();
        let c: Vec<f64> = (0..g.fan_in() * g.positions()).map(|i| (i as f64 * 0.11).cos()).collect();
        let lhs: f64 = g.im2col(&x).iter().zip(&c).map(|(a, b)| a * b).sum();
        let rhs: f64 = x.iter().zip(g.col2im(&c)).map(|(a, b)| a * b).sum();
        assert!((lhs - rhs).abs() < 1e-12);
    }
}
