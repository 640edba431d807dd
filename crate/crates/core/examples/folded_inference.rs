//! Train a small SNN, fold scaling, batch norm and the LIF leak into per-step
//! neuron parameters, then compare folded and unfolded inference.
//!
//! cargo run --release --example folded_inference -- [epochs]

use std::io::sink;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tawq::data::gen_temporal_xor;
use tawq::layers::{BuildOptions, LayerSpec, LifConfig, Precision};
use tawq::runtime::{max_membrane_deviation, unfolded_inference, Stage};
use tawq::{train, InferenceModel, Network, QuantConfig, TrainConfig};

fn main() -> tawq::Result<()> {
    let epochs: usize = std::env::args().nth(1).map_or(20, |s| s.parse().expect("epochs"));
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
    let mut net = Network::build(&[8], 4, &specs, &opts, &mut ChaCha8Rng::seed_from_u64(0))?;
    let (train_set, test_set) = gen_temporal_xor(1000, 4, 0.05, 100)?.split(0.2, 0)?;
    let cfg = TrainConfig { epochs, ..TrainConfig::default() };
    train(&mut net, &train_set, &test_set, &cfg, &mut sink())?;

    let model = InferenceModel::from_network(&net)?;
    for stage in &model.stages {
        if let Stage::Folded { params, lif_layer, .. } = stage {
            println!("layer {lif_layer}: {} channels folded", params.channels());
            for t in 0..model.timesteps {
                println!("  t={t}  rho[0..4] {:.5?}", &params.rho_at(t)[..4]);
            }
            println!("  delta[0..4] {:.5?}", &params.delta[..4]);
        }
    }

    let (x, labels) = test_set.all()?;
    let start = Instant::now();
    let folded = model.folded_inference(&x)?;
    let t_folded = start.elapsed();
    let start = Instant::now();
    let reference = unfolded_inference(&net, &x)?;
    let t_ref = start.elapsed();
    let pred = folded.predictions(2);
    let hits = pred.iter().zip(&labels).filter(|(p, l)| p == l).count();
    println!("max membrane deviation {:.3e}", max_membrane_deviation(&folded, &reference)?);
    println!("argmax agreement {}", pred == reference.predictions(2));
    println!("accuracy {:.4}", hits as f64 / labels.len() as f64);
    println!("folded {t_folded:.2?}  unfolded {t_ref:.2?}");
    Ok(())
}
