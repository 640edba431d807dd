//! Synaptic-operation energy and the read/write-inclusive hardware estimate
//! for a trained temporal XOR network and its full-precision counterpart.
//!
//! cargo run --release --example energy_report -- [epochs]

use std::io::sink;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tawq::analysis::{count_sops, energy_hardware, HardwareConfig};
use tawq::data::gen_temporal_xor;
use tawq::layers::{BuildOptions, LayerSpec, LifConfig, Precision};
use tawq::{network_forward, train, ForwardOptions, Network, QuantConfig, TrainConfig};

fn main() -> tawq::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(20, |s| s.parse().expect("epochs"));
    let specs = vec![
        LayerSpec::Qlinear { out_features: 64, quantize: None },
        LayerSpec::Bn,
        LayerSpec::Lif,
        LayerSpec::Qlinear { out_features: 32, quantize: None },
        LayerSpec::Bn,
        LayerSpec::Lif,
        LayerSpec::Qlinear { out_features: 2, quantize: None },
    ];
    let (train_set, test_set) = gen_temporal_xor(1000, 4, 0.05, 100)?.split(0.2, 0)?;
    let (x, _) = test_set.all()?;

    for precision in [Precision::FullPrecision, Precision::Tawq] {
        let opts = BuildOptions {
            precision,
            quantize_first: false,
            ablate_temporal: false,
            quant: QuantConfig::default(),
            lif: LifConfig::default(),
        };
        let mut net = Network::build(&[8], 4, &specs, &opts, &mut ChaCha8Rng::seed_from_u64(0))?;
        let cfg = TrainConfig { epochs, ..TrainConfig::default() };
        let out = train(&mut net, &train_set, &test_set, &cfg, &mut sink())?;
        let (_, traces) = network_forward(&net, &x, ForwardOptions::default())?;
        let energy = count_sops(&net, &traces)?;
        let hw = energy_hardware(&net, Some(&energy), &HardwareConfig::default())?;

        println!("{precision:?}: accuracy {:.4}", out.test_accuracy);
        for l in &energy.layers {
            let fr = l.firing_rate.iter().sum::<f64>() / l.firing_rate.len().max(1) as f64;
            println!(
                "  layer {}  quantized {:<5}  fr {fr:.3}  FLOPs {:>9.1}  SOPs {:>9.3}",
                l.layer, l.quantized, l.flops_float, l.sops
            );
        }
        let t = &energy.totals;
        println!("  E_MAC {:.1} pJ  E_AC {:.1} pJ  total {:.1} pJ", t.e_mac_pj, t.e_ac_pj, t.e_total_pj);
        for l in &hw.layers {
            println!(
                "  layer {} {:?}: weight read {:.0}  activation read {:.0}  write {:.0}",
                l.layer, l.class, l.weight_read, l.activation_read, l.write
            );
        }
        println!("  hardware total {:.1} E_rd\n", hw.total);
    }
    Ok(())
}
