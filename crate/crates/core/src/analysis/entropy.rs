use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};
use crate::layers::Network;

/// `ln 3`, reached only by the uniform ternary distribution.
pub const MAX_TERNARY_ENTROPY: f64 = 1.0986122886681098;

/// `−Σ p ln p` in nats, with `0 ln 0 = 0`.
pub fn entropy_of(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|p| -p * p.ln()).sum::<f64>() + 0.0
}

/// Level probabilities of a ternary tensor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EntropyReport {
    pub p_p: f64,
    pub p_z: f64,
    pub p_n: f64,
    /// Nats.
    pub entropy: f64,
}

fn count_levels<'a>(w: impl IntoIterator<Item = &'a Vec<i32>>) -> Result<(std::collections::BTreeMap<i32, usize>, usize)> {
    let mut hist = std::collections::BTreeMap::new();
    let mut total = 0;
    for v in w.into_iter().flatten() {
        *hist.entry(*v).or_insert(0) += 1;
        total += 1;
    }
    if total == 0 {
        return Err(TawqError::Data("entropy of an empty tensor".into()));
    }
    Ok((hist, total))
}

/// Empirical entropy over every `(t, c, i, j, k)` entry of a ternary tensor.
pub fn weight_entropy(w_q: &[Vec<i32>]) -> Result<EntropyReport> {
    let (hist, total) = count_levels(w_q)?;
    if let Some(bad) = hist.keys().find(|v| v.abs() > 1) {
        return Err(TawqError::Data(format!("weight {bad} is not ternary")));
    }
    let p = |v: i32| hist.get(&v).copied().unwrap_or(0) as f64 / total as f64;
    let (p_p, p_z, p_n) = (p(1), p(0), p(-1));
    Ok(EntropyReport {
        p_p,
        p_z,
        p_n,
        entropy: entropy_of(&[p_p, p_z, p_n]),
    })
}

/// Entropy over all `2n + 1` levels of a multi-bit tensor.
pub fn level_entropy(w_q: &[Vec<i32>]) -> Result<f64> {
    let (hist, total) = count_levels(w_q)?;
    let probs: Vec<f64> = hist.values().map(|&c| c as f64 / total as f64).collect();
    Ok(entropy_of(&probs))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerEntropy {
    pub layer: usize,
    pub n_level: u32,
    /// Sign probabilities; for `n > 1` positive and negative levels are pooled.
    pub p_p: f64,
    pub p_z: f64,
    pub p_n: f64,
    /// Entropy over all levels.
    pub entropy: f64,
    /// Largest number of all-zero output channels (α = 0) at any one step.
    pub zero_alpha_channels: usize,
}

/// Entropy of every quantized synaptic layer.
pub fn entropy_report(net: &Network) -> Result<Vec<LayerEntropy>> {
    let quantized = net.quantized_weights()?;
    let mut out = Vec::with_capacity(quantized.len());
    for (idx, w_q) in quantized {
        let crate::layers::Layer::Synapse(s) = &net.layers[idx] else {
            unreachable!("quantized weights come from synaptic layers")
        };
        let signs: Vec<Vec<i32>> = w_q.iter().map(|w| w.iter().map(|v| v.signum()).collect()).collect();
        let r = weight_entropy(&signs).map_err(|e| e.in_layer(idx))?;
        let co = s.geometry.out_channels;
        let zero_alpha_channels = w_q
            .iter()
            .map(|w| {
                w.chunks(w.len() / co)
                    .filter(|ch| ch.iter().all(|&v| v == 0))
                    .count()
            })
            .max()
            .unwrap_or(0);
        out.push(LayerEntropy {
            layer: idx,
            n_level: s.quant.n_level,
            p_p: r.p_p,
            p_z: r.p_z,
            p_n: r.p_n,
            entropy: if s.quant.n_level == 1 {
                r.entropy
            } else {
                level_entropy(&w_q).map_err(|e| e.in_layer(idx))?
            },
            zero_alpha_channels,
        });
    }
    Ok(out)
}

/// Mean entropy over the quantized layers, `None` if there are none.
pub fn network_entropy(net: &Network) -> Result<Option<f64>> {
    let rows = entropy_report(net)?;
    if rows.is_empty() {
        return Ok(None);
    }
    Ok(Some(rows.iter().map(|r| r.entropy).sum::<f64>() / rows.len() as f64))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn uniform_thirds() {
        let w = vec![vec![1, 0, -1, 1, 0, -1]];
        let r = weight_entropy(&w).unwrap();
        assert!((r.entropy - 1.0986).abs() < 1e-4);
        assert!((r.entropy - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn degenerate_and_two_outcome() {
        assert_eq!(weight_entropy(&[vec![1; 9]]).unwrap().entropy, 0.0);
        let r = weight_entropy(&[vec![1, 0, 1, 0]]).unwrap();
        assert!((r.entropy - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn rejects_empty_and_non_ternary() {
        assert!(weight_entropy(&[vec![]]).is_err());
        assert!(weight_entropy(&[vec![2]]).is_err());
    }
}
