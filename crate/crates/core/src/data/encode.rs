use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Encoder {
    /// Real values repeated at every step.
    Direct,
    /// Bernoulli spikes with probability `x` per step.
    #[default]
    Rate,
    /// One spike, earlier for larger `x`; zero never fires.
    Latency,
}

fn check_unit(x: &[f64]) -> Result<()> {
    match x.iter().position(|v| !(0.0..=1.0).contains(v)) {
        Some(i) => Err(TawqError::Data(format!("encoder input {} at index {i} is outside [0, 1]", x[i]))),
        None => Ok(()),
    }
}

/// `(T, len)` Bernoulli spike train.
pub fn rate_encode(x: &[f64], timesteps: usize, seed: u64) -> Result<Vec<f64>> {
    check_unit(x)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(timesteps * x.len());
    for _ in 0..timesteps {
        out.extend(x.iter().map(|&p| if rng.gen::<f64>() < p { 1.0 } else { 0.0 }));
    }
    Ok(out)
}

/// `x = 1` fires at step 0, small `x` near step `T − 1`.
pub fn latency_encode(x: &[f64], timesteps: usize) -> Result<Vec<f64>> {
    check_unit(x)?;
    let mut out = vec![0.0; timesteps * x.len()];
    if timesteps == 0 {
        return Ok(out);
    }
    for (i, &v) in x.iter().enumerate() {
        if v > 0.0 {
            let t = ((1.0 - v) * (timesteps - 1) as f64).round() as usize;
            out[t * x.len() + i] = 1.0;
        }
    }
    Ok(out)
}

pub fn direct_encode(x: &[f64], timesteps: usize) -> Vec<f64> {
    x.repeat(timesteps)
}

pub fn encode(x: &[f64], encoder: Encoder, timesteps: usize, seed: u64) -> Result<Vec<f64>> {
    match encoder {
        Encoder::Direct => Ok(direct_encode(x, timesteps)),
        Encoder::Rate => rate_encode(x, timesteps, seed),
        Encoder::Latency => latency_encode(x, timesteps),
    }
}
