//! Theoretical and read/write-inclusive energy models.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};
use crate::layers::{Layer, LayerTrace, Network, Traces};

/// 32-bit multiply-accumulate, pJ.
pub const E_MAC: f64 = 4.6;
/// 32-bit accumulate, pJ.
pub const E_AC: f64 = 0.9;
/// 8-bit accumulate, pJ.
pub const E_AC_8BIT: f64 = 0.03;

/// `Σ_t fr_t · sr_t · TOPs / 64`.
pub fn layer_sops(firing_rate: &[f64], synapse_ratio: &[f64], tops: f64) -> f64 {
    firing_rate
        .iter()
        .zip(synapse_ratio)
        .map(|(fr, sr)| fr * sr * tops / 64.0)
        .sum()
}

/// Operation counts of one synaptic layer for one sample.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerOps {
    pub layer: usize,
    pub quantized: bool,
    /// Whether every input entry was 0 or 1.
    pub binary_input: bool,
    /// Dense synaptic operations per timestep.
    pub tops: f64,
    /// Nonzero weight fraction per timestep; 1 for float layers.
    pub synapse_ratio: Vec<f64>,
    /// Nonzero input fraction per timestep.
    pub firing_rate: Vec<f64>,
    pub bops: f64,
    /// Multiply-accumulates charged at `E_MAC`.
    pub flops_float: f64,
    /// Accumulates charged at `E_AC`.
    pub sops: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyTotals {
    pub flops_float: f64,
    pub sops: f64,
    pub e_mac_pj: f64,
    pub e_ac_pj: f64,
    pub e_total_pj: f64,
    pub e_total_mj: f64,
}

/// `E_MAC · FLOPs + E_AC · SOPs`.
pub fn energy_total(flops_float: f64, sops: f64) -> EnergyTotals {
    let e_mac_pj = E_MAC * flops_float;
    let e_ac_pj = E_AC * sops;
    let e_total_pj = e_mac_pj + e_ac_pj;
    EnergyTotals {
        flops_float,
        sops,
        e_mac_pj,
        e_ac_pj,
        e_total_pj,
        e_total_mj: e_total_pj * 1e-9,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub layers: Vec<LayerOps>,
    pub totals: EnergyTotals,
}

/// Per-sample operation counts from a recorded forward pass.
///
/// Quantized layers count `sr · TOPs / 64` accumulates per step, float layers
/// fed by spikes count `TOPs` accumulates, and float layers fed by real values
/// count `TOPs` multiply-accumulates. Every count is weighted by the input
/// firing rate of its step.
pub fn count_sops(net: &Network, traces: &Traces) -> Result<EnergyReport> {
    if traces.layers.len() != net.layers.len() {
        return Err(TawqError::State("traces do not match the network".into()));
    }
    let steps = net.timesteps;
    let mut layers = Vec::new();
    for (idx, layer) in net.layers.iter().enumerate() {
        let Layer::Synapse(s) = layer else { continue };
        let LayerTrace::Synapse { weights, .. } = &traces.layers[idx] else {
            return Err(TawqError::State(format!("layer {idx}: missing synapse trace")));
        };
        let input = &traces.inputs[idx];
        let len = input.sample_len();
        let firing_rate: Vec<f64> = (0..steps)
            .map(|t| {
                let block = &input.data[t * input.batch * len..(t + 1) * input.batch * len];
                block.iter().filter(|&&v| v != 0.0).count() as f64 / block.len().max(1) as f64
            })
            .collect();
        let binary_input = input.is_binary();
        let tops = s.geometry.dense_ops() as f64;
        let quantized = s.mode.is_quantized();
        let synapse_ratio: Vec<f64> = if quantized {
            weights
                .weights
                .iter()
                .map(|w| w.iter().filter(|&&v| v != 0.0).count() as f64 / w.len() as f64)
                .collect()
        } else {
            vec![1.0; steps]
        };
        let (bops, flops_float, sops) = if quantized {
            let bops = synapse_ratio.iter().map(|sr| sr * tops).sum();
            (bops, 0.0, layer_sops(&firing_rate, &synapse_ratio, tops))
        } else if binary_input {
            (0.0, 0.0, firing_rate.iter().map(|fr| fr * tops).sum())
        } else {
            (0.0, firing_rate.iter().map(|fr| fr * tops).sum(), 0.0)
        };
        layers.push(LayerOps {
            layer: idx,
            quantized,
            binary_input,
            tops,
            synapse_ratio,
            firing_rate,
            bops,
            flops_float,
            sops,
        });
    }
    let totals = energy_total(
        layers.iter().map(|l| l.flops_float).sum(),
        layers.iter().map(|l| l.sops).sum(),
    );
    Ok(EnergyReport { layers, totals })
}

/// Weight storage class in the read/write model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightClass {
    /// 2-bit weights, 1-bit spikes.
    Tawq,
    /// 8-bit weights, 8-bit encoded input.
    EightBitFirst,
    /// 8-bit weights, 1-bit spikes.
    EightBit,
}

impl WeightClass {
    /// `(weight, activation)` read cost per access in units of `E_rd`.
    pub fn read_costs(self) -> (f64, f64) {
        match self {
            WeightClass::Tawq => (0.25, 0.125),
            WeightClass::EightBitFirst => (1.0, 1.0),
            WeightClass::EightBit => (1.0, 0.125),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HardwareConfig {
    /// Energy of one 8-bit memory read; only ratios are meaningful.
    pub e_rd: f64,
    /// Energy of one write relative to a read of the same width.
    pub write_ratio: f64,
}

impl Default for HardwareConfig {
    fn default() -> Self {
        Self { e_rd: 1.0, write_ratio: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerHardware {
    pub layer: usize,
    pub class: WeightClass,
    /// `C_o · C_i · k_h · k_w`.
    pub n_rd: f64,
    pub weight_read: f64,
    pub activation_read: f64,
    pub write: f64,
    pub compute: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HardwareReport {
    pub layers: Vec<LayerHardware>,
    pub weight_read: f64,
    pub activation_read: f64,
    pub write: f64,
    pub compute: f64,
    pub total: f64,
}

/// Read/write-inclusive energy.
///
/// Each synaptic layer reads `N_rd` weights and activations per output
/// position and timestep, priced by its [`WeightClass`]; writes mirror reads.
/// Compute is `E_AC_8BIT · SOPs + E_MAC · FLOPs` when `ops` is supplied.
pub fn energy_hardware(net: &Network, ops: Option<&EnergyReport>, cfg: &HardwareConfig) -> Result<HardwareReport> {
    if !(cfg.e_rd >= 0.0 && cfg.write_ratio >= 0.0) {
        return Err(TawqError::Param("hardware energies must be non-negative".into()));
    }
    let steps = net.timesteps as f64;
    let mut layers = Vec::new();
    for (pos, (idx, s)) in net.synapses().enumerate() {
        let g = &s.geometry;
        let class = if s.mode.is_quantized() {
            WeightClass::Tawq
        } else if pos == 0 {
            WeightClass::EightBitFirst
        } else {
            WeightClass::EightBit
        };
        let n_rd = g.weight_len() as f64;
        let repeat = steps * g.positions() as f64;
        let (w_cost, a_cost) = class.read_costs();
        let weight_read = n_rd * w_cost * cfg.e_rd * repeat;
        let activation_read = n_rd * a_cost * cfg.e_rd * repeat;
        let compute = match ops.and_then(|r| r.layers.iter().find(|l| l.layer == idx)) {
            Some(l) => E_AC_8BIT * l.sops + E_MAC * l.flops_float,
            None => 0.0,
        };
        layers.push(LayerHardware {
            layer: idx,
            class,
            n_rd,
            weight_read,
            activation_read,
            write: (weight_read + activation_read) * cfg.write_ratio,
            compute,
        });
    }
    let sum = |f: fn(&LayerHardware) -> f64| layers.iter().map(f).sum::<f64>();
    let (weight_read, activation_read, write, compute) =
        (sum(|l| l.weight_read), sum(|l| l.activation_read), sum(|l| l.write), sum(|l| l.compute));
    Ok(HardwareReport {
        total: weight_read + activation_read + write + compute,
        layers,
        weight_read,
        activation_read,
        write,
        compute,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sops_formula() {
        assert_eq!(layer_sops(&[1.0], &[0.5], 640.0), 5.0);
        assert_eq!(layer_sops(&[0.0, 0.0], &[1.0, 1.0], 640.0), 0.0);
    }

    #[test]
    fn total_substitution() {
        let e = energy_total(1000.0, 10_000.0);
        assert_eq!(e.e_total_pj, 13_600.0);
        assert!((e.e_total_mj - 1.36e-5).abs() < 1e-20);
        assert_eq!(energy_total(0.0, 0.0).e_total_pj, 0.0);
        assert_eq!(energy_total(0.0, 20_000.0).e_ac_pj, 2.0 * energy_total(0.0, 10_000.0).e_ac_pj);
    }

    #[test]
    fn read_ratio() {
        let (t, _) = WeightClass::Tawq.read_costs();
        let (e, _) = WeightClass::EightBit.read_costs();
        assert_eq!(t / e, 0.25);
    }
}
