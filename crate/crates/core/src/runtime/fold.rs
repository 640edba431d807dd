use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};
use crate::layers::{BnParams, LifConfig};
use crate::quant::ScalingFactor;

/// Per-timestep scaling and bias absorbed into the LIF charging step:
/// `H[t] = (1 − 1/τ) U[t−1] + ρ[t] ⊙ (W_q ⊗ X)[t] + δ`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldedNeuronParams {
    /// `(T, C_o)`, row-major.
    pub rho: Vec<f64>,
    pub delta: Vec<f64>,
    pub lif: LifConfig,
}

impl FoldedNeuronParams {
    pub fn channels(&self) -> usize {
        self.delta.len()
    }

    pub fn rho_at(&self, t: usize) -> &[f64] {
        let c = self.channels();
        &self.rho[t * c..(t + 1) * c]
    }
}

/// `ρ[t] = γ α[t] / (τ sqrt(σ² + ε))`, `δ = (β − γ μ / sqrt(σ² + ε)) / τ`.
///
/// Without batch norm, `ρ[t] = α[t] / τ` and `δ = 0`.
pub fn fold_parameters(alpha: &ScalingFactor, bn: Option<&BnParams>, lif: &LifConfig) -> Result<FoldedNeuronParams> {
    lif.validate()?;
    let co = alpha.channels;
    let (scale, shift) = match bn {
        Some(bn) => {
            bn.validate()?;
            if bn.channels() != co {
                return Err(TawqError::Shape(format!(
                    "batch norm has {} channels, scaling has {co}",
                    bn.channels()
                )));
            }
            if let Some(c) = bn.sigma2.iter().position(|v| !(v + bn.eps > 0.0)) {
                return Err(TawqError::Param(format!("σ² + ε is not positive in channel {c}")));
            }
            bn.affine()
        }
        None => (vec![1.0; co], vec![0.0; co]),
    };
    let tau = lif.tau;
    let rho = (0..alpha.timesteps)
        .flat_map(|t| alpha.at(t).iter().zip(&scale).map(move |(a, s)| s * a / tau).collect::<Vec<_>>())
        .collect();
    let delta = shift.iter().map(|s| s / tau).collect();
    Ok(FoldedNeuronParams {
        rho,
        delta,
        lif: *lif,
    })
}
