//! Ternary weight distribution of each quantized layer before and after
//! training on temporal XOR.
//!
//! cargo run --release --example entropy_tracking -- [seed]

use std::io::sink;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tawq::analysis::{entropy_report, LayerEntropy, MAX_TERNARY_ENTROPY};
use tawq::data::gen_temporal_xor;
use tawq::layers::{BuildOptions, LayerSpec, LifConfig, Precision};
use tawq::{train, Network, QuantConfig, TrainConfig};

fn print(stage: &str, rows: &[LayerEntropy]) {
    for r in rows {
        println!(
            "{stage:<8} layer {:>2}  p+ {:.4}  p0 {:.4}  p- {:.4}  H {:.4} / {MAX_TERNARY_ENTROPY:.4}",
            r.layer, r.p_p, r.p_z, r.p_n, r.entropy
        );
    }
}

fn main() -> tawq::Result<()> {
    let seed: u64 = std::env::args().nth(1).map_or(0, |s| s.parse().expect("seed"));
    let specs = vec![
        LayerSpec::Qlinear { out_features: 32, quantize: None },
        LayerSpec::Bn,
        LayerSpec::Lif,
        LayerSpec::Qlinear { out_features: 2, quantize: None },
    ];
    let opts = BuildOptions {
        precision: Precision::Tawq,
        quantize_first: true,
        ablate_temporal: false,
        quant: QuantConfig::default(),
        lif: LifConfig::default(),
    };
    let mut net = Network::build(&[8], 4, &specs, &opts, &mut ChaCha8Rng::seed_from_u64(seed))?;
    print("init", &entropy_report(&net)?);

    let (train_set, test_set) = gen_temporal_xor(1000, 4, 0.05, 100 + seed)?.split(0.2, seed)?;
    let cfg = TrainConfig { seed, ..TrainConfig::default() };
    let out = train(&mut net, &train_set, &test_set, &cfg, &mut sink())?;
    print("trained", &entropy_report(&net)?);
    println!("test accuracy {:.4}", out.test_accuracy);
    Ok(())
}
