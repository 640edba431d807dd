//! Post-hoc metrics over trained networks and recorded traces.

pub mod energy;
pub mod entropy;
pub mod firing;

pub use energy::{
    count_sops, energy_hardware, energy_total, layer_sops, EnergyReport, EnergyTotals, HardwareConfig,
    HardwareReport, LayerHardware, LayerOps, WeightClass, E_AC, E_AC_8BIT, E_MAC,
};
pub use entropy::{
    entropy_of, entropy_report, level_entropy, network_entropy, weight_entropy, EntropyReport, LayerEntropy,
    MAX_TERNARY_ENTROPY,
};
pub use firing::{firing_rate_stats, firing_rates, pearson, FiringStats, LayerFiring};
