//! Train the same two-layer SNN on temporal XOR three ways: full precision,
//! temporal ternary weights, and ternary weights without temporal dynamics.
//!
//! cargo run --release --example train_temporal_xor -- [seeds] [epochs]

use std::io::sink;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tawq::data::gen_temporal_xor;
use tawq::layers::{BuildOptions, LayerSpec, LifConfig, Precision};
use tawq::{train, Network, QuantConfig, TrainConfig};

fn specs(hidden: usize) -> Vec<LayerSpec> {
    vec![
        LayerSpec::Qlinear {
            out_features: hidden,
            quantize: None,
        },
        LayerSpec::Bn,
        LayerSpec::Lif,
        LayerSpec::Qlinear {
            out_features: 2,
            quantize: None,
        },
    ]
}

fn main() -> tawq::Result<()> {
    let mut args = std::env::args().skip(1);
    let seeds: u64 = args.next().map_or(5, |s| s.parse().expect("seed count"));
    let epochs: usize = args.next().map_or(50, |s| s.parse().expect("epoch count"));
    let timesteps = 4;
    let variants = [
        ("full-precision", Precision::FullPrecision, false),
        ("tawq", Precision::Tawq, false),
        ("wq", Precision::Tawq, true),
    ];
    println!("{:<16} {:>5} {:>9} {:>9}", "variant", "seed", "test_acc", "entropy");
    for (name, precision, ablate) in variants {
        let mut accs = Vec::new();
        for seed in 0..seeds {
            let data = gen_temporal_xor(1000, timesteps, 0.05, 100 + seed)?;
            let (train_set, test_set) = data.split(0.2, seed)?;
            let opts = BuildOptions {
                precision,
                quantize_first: true,
                ablate_temporal: ablate,
                quant: QuantConfig::default(),
                lif: LifConfig::default(),
            };
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut net = Network::build(&[8], timesteps, &specs(32), &opts, &mut rng)?;
            let cfg = TrainConfig {
                epochs,
                seed,
                lr: 0.01,
                ablate_temporal: ablate,
                ..TrainConfig::default()
            };
            let out = train(&mut net, &train_set, &test_set, &cfg, &mut sink())?;
            println!(
                "{name:<16} {seed:>5} {:>9.4} {:>9}",
                out.test_accuracy,
                out.final_entropy.map_or("-".into(), |h| format!("{h:.4}"))
            );
            accs.push(out.test_accuracy);
        }
        accs.sort_by(f64::total_cmp);
        println!("{name:<16} median {:.4}", accs[accs.len() / 2]);
    }
    Ok(())
}
