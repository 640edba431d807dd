use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PoolMode {
    Avg,
    Max,
}

/// Non-overlapping pooling with window and stride `kernel`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pool {
    pub mode: PoolMode,
    pub kernel: usize,
    pub channels: usize,
    pub in_h: usize,
    pub in_w: usize,
}

impl Pool {
    pub fn new(mode: PoolMode, kernel: usize, in_shape: &[usize]) -> Result<Self> {
        let [channels, in_h, in_w] = in_shape else {
            return Err(TawqError::Shape(format!("pooling needs a (C, H, W) input, got {in_shape:?}")));
        };
        if kernel == 0 || in_h % kernel != 0 || in_w % kernel != 0 {
            return Err(TawqError::Shape(format!(
                "pool kernel {kernel} does not tile a {in_h}x{in_w} map"
            )));
        }
        Ok(Self {
            mode,
            kernel,
            channels: *channels,
            in_h: *in_h,
            in_w: *in_w,
        })
    }

    pub fn out_shape(&self) -> Vec<usize> {
        vec![self.channels, self.in_h / self.kernel, self.in_w / self.kernel]
    }

    fn in_len(&self) -> usize {
        self.channels * self.in_h * self.in_w
    }

    /// Returns the pooled block and, for max pooling, the selected input index
    /// of every output.
    pub(crate) fn forward(&self, x: &[f64]) -> (Vec<f64>, Vec<usize>) {
        let k = self.kernel;
        let (oh, ow) = (self.in_h / k, self.in_w / k);
        let in_len = self.in_len();
        let out_len = self.channels * oh * ow;
        let samples = x.len() / in_len;
        let mut y = Vec::with_capacity(samples * out_len);
        let mut picks = Vec::new();
        for s in 0..samples {
            let xs = &x[s * in_len..(s + 1) * in_len];
            for c in 0..self.channels {
                for oy in 0..oh {
                    for ox in 0..ow {
                        let mut best = f64::NEG_INFINITY;
                        let mut best_i = 0;
                        let mut sum = 0.0;
                        for ky in 0..k {
                            for kx in 0..k {
                                let i = (c * self.in_h + oy * k + ky) * self.in_w + ox * k + kx;
                                sum += xs[i];
                                if xs[i] > best {
                                    best = xs[i];
                                    best_i = i;
                                }
                            }
                        }
                        match self.mode {
                            PoolMode::Avg => y.push(sum / (k * k) as f64),
                            PoolMode::Max => {
                                y.push(best);
                                picks.push(s * in_len + best_i);
                            }
                        }
                    }
                }
            }
        }
        (y, picks)
    }

    pub(crate) fn backward(&self, grad_y: &[f64], picks: &[usize]) -> Vec<f64> {
        let k = self.kernel;
        let (oh, ow) = (self.in_h / k, self.in_w / k);
        let in_len = self.in_len();
        let out_len = self.channels * oh * ow;
        let samples = grad_y.len() / out_len;
        let mut gx = vec![0.0; samples * in_len];
        match self.mode {
            PoolMode::Max => {
                for (g, &i) in grad_y.iter().zip(picks) {
                    gx[i] += g;
                }
            }
            PoolMode::Avg => {
                let share = 1.0 / (k * k) as f64;
                for s in 0..samples {
                    for c in 0..self.channels {
                        for oy in 0..oh {
                            for ox in 0..ow {
                                let g = grad_y[s * out_len + (c * oh + oy) * ow + ox] * share;
                                for ky in 0..k {
                                    for kx in 0..k {
                                        gx[s * in_len + (c * self.in_h + oy * k + ky) * self.in_w + ox * k + kx] += g;
                                    }
                                }
                            }
                        }
                    }
                }
            }
        }
        gx
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn max_and_avg() {
        let x = [1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0];
        let p = Pool::new(PoolMode::Max, 2, &[2, 2, 2]).unwrap();
        assert_eq!(p.forward(&x).0, vec![1.0, 0.0]);
        let p = Pool::new(PoolMode::Avg, 2, &[2, 2, 2]).unwrap();
        assert_eq!(p.forward(&x).0, vec![0.5, 0.0]);
        assert!(Pool::new(PoolMode::Avg, 3, &[2, 2, 2]).is_err());
    }
}
