//! Sweep the quantization level count `n` on temporal XOR and report accuracy
//! and level entropy next to the effective bit width `log2(2n + 1)`.
//!
//! cargo run --release --example bitwidth_ablation -- [epochs] [seed]

use std::io::sink;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tawq::analysis::network_entropy;
use tawq::data::gen_temporal_xor;
use tawq::layers::{BuildOptions, LayerSpec, LifConfig, Precision};
use tawq::quant::bit_width;
use tawq::{train, Network, QuantConfig, TrainConfig};

fn main() -> tawq::Result<()> {
    let mut args = std::env::args().skip(1);
    let epochs: usize = args.next().map_or(30, |s| s.parse().expect("epochs"));
    let seed: u64 = args.next().map_or(0, |s| s.parse().expect("seed"));
    let specs = vec![
        LayerSpec::Qlinear { out_features: 32, quantize: None },
        LayerSpec::Bn,
        LayerSpec::Lif,
        LayerSpec::Qlinear { out_features: 2, quantize: None },
    ];
    let (train_set, test_set) = gen_temporal_xor(1000, 4, 0.05, 100 + seed)?.split(0.2, seed)?;

    println!("{:>2} {:>6} {:>9} {:>8}", "n", "bits", "accuracy", "H");
    for n_level in [1, 2, 4, 8] {
        let opts = BuildOptions {
            precision: Precision::Tawq,
            quantize_first: true,
            ablate_temporal: false,
            quant: QuantConfig { n_level, ..QuantConfig::default() },
            lif: LifConfig::default(),
        };
        let mut net = Network::build(&[8], 4, &specs, &opts, &mut ChaCha8Rng::seed_from_u64(seed))?;
        let cfg = TrainConfig { epochs, seed, ..TrainConfig::default() };
        let out = train(&mut net, &train_set, &test_set, &cfg, &mut sink())?;
        let h = network_entropy(&net)?.unwrap_or(f64::NAN);
        println!("{n_level:>2} {:>6.2} {:>9.4} {h:>8.4}", bit_width(n_level), out.test_accuracy);
    }
    Ok(())
}
