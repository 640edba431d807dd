use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};
use crate::layers::{LayerTrace, Traces};

/// Spike rate of one LIF layer at each timestep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerFiring {
    pub layer: usize,
    pub rates: Vec<f64>,
    pub mean: f64,
}

pub fn firing_rates(traces: &Traces) -> Vec<LayerFiring> {
    traces
        .layers
        .iter()
        .enumerate()
        .filter_map(|(idx, tr)| {
            let LayerTrace::Lif { spikes, .. } = tr else { return None };
            let steps = traces.inputs[0].timesteps;
            let block = spikes.len() / steps.max(1);
            let rates: Vec<f64> = spikes
                .chunks(block.max(1))
                .map(|c| c.iter().sum::<f64>() / c.len() as f64)
                .collect();
            let mean = rates.iter().sum::<f64>() / rates.len().max(1) as f64;
            Some(LayerFiring { layer: idx, rates, mean })
        })
        .collect()
}

/// Pearson correlation, `None` when either series has zero variance.
pub fn pearson(a: &[f64], b: &[f64]) -> Option<f64> {
    if a.len() != b.len() || a.len() < 2 {
        return None;
    }
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return None;
    }
    Some(sab / (saa * sbb).sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FiringStats {
    pub layers: Vec<LayerFiring>,
    /// Correlation of all per-layer, per-step rates against a second run;
    /// `None` when not compared or degenerate.
    pub correlation: Option<f64>,
}

/// Firing rates of `a`, optionally correlated with those of `b`.
pub fn firing_rate_stats(a: &Traces, b: Option<&Traces>) -> Result<FiringStats> {
    let layers = firing_rates(a);
    let correlation = match b {
        None => None,
        Some(b) => {
            let other = firing_rates(b);
            let same = layers.len() == other.len()
                && layers
                    .iter()
                    .zip(&other)
                    .all(|(x, y)| x.layer == y.layer && x.rates.len() == y.rates.len());
            if !same {
                return Err(TawqError::Shape("firing traces have different topologies".into()));
            }
            let flat = |l: &[LayerFiring]| l.iter().flat_map(|f| f.rates.clone()).collect::<Vec<_>>();
            pearson(&flat(&layers), &flat(&other))
        }
    };
    Ok(FiringStats { layers, correlation })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pearson_closed_form() {
        let a = [1.0, 2.0, 3.0, 5.0];
        let b = [2.0, 1.0, 4.0, 6.0];
        // means 2.75 and 3.25
        let sab = -1.75 * -1.25 + -0.75 * -2.25 + 0.25 * 0.75 + 2.25 * 2.75;
        let saa = 1.75f64.powi(2) + 0.75f64.powi(2) + 0.25f64.powi(2) + 2.25f64.powi(2);
        let sbb = 1.25f64.powi(2) + 2.25f64.powi(2) + 0.75f64.powi(2) + 2.75f64.powi(2);
        let want = sab / (saa * sbb).sqrt();
        assert!((pearson(&a, &b).unwrap() - want).abs() < 1e-15);
        assert!((pearson(&a, &a).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn constant_series_is_degenerate() {
        assert_eq!(pearson(&[0.5; 4], &[1.5; 4]), None);
    }
}
