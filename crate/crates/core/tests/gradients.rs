mod common;

use common::*;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tawq::layers::Precision;
use tawq::quant::{tawq_forward, QuantConfig};
use tawq::train::tawq_backward;

#[test]
fn relaxed_mlp_matches_finite_differences() {
    let net = build(&[8], 4, &xor_specs(6), &options(Precision::Tawq, true, false), 3);
    let x = random_input(4, 6, vec![8], 1);
    for (name, err) in finite_difference_check(net, &x, &[0, 1, 1, 0, 1, 0]) {
        assert!(err <= 1e-5, "{name}: relative error {err:e}");
    }
}

#[test]
fn relaxed_conv_matches_finite_differences() {
    let net = build(&[2, 6, 6], 2, &conv_specs(), &options(Precision::Tawq, false, false), 5);
    let x = random_input(2, 3, vec![2, 6, 6], 2);
    for (name, err) in finite_difference_check(net, &x, &[0, 2, 1]) {
        assert!(err <= 1e-5, "{name}: relative error {err:e}");
    }
}

#[test]
fn relaxed_memoryless_matches_finite_differences() {
    let net = build(&[8], 3, &xor_specs(5), &options(Precision::Tawq, true, true), 4);
    let x = random_input(3, 4, vec![8], 9);
    for (name, err) in finite_difference_check(net, &x, &[1, 0, 1, 1]) {
        assert!(err <= 1e-5, "{name}: relative error {err:e}");
    }
}

#[test]
fn relaxed_multibit_matches_finite_differences() {
    let mut opts = options(Precision::Tawq, true, false);
    opts.quant.n_level = 2;
    let net = build(&[8], 4, &xor_specs(5), &opts, 8);
    let x = random_input(4, 4, vec![8], 10);
    for (name, err) in finite_difference_check(net, &x, &[1, 0, 0, 1]) {
        assert!(err <= 1e-5, "{name}: relative error {err:e}");
    }
}

#[test]
fn chain_factor_scales_quantizer_gradient() {
    let cfg = QuantConfig::default();
    let chained = QuantConfig {
        sg_chain_factor: true,
        ..cfg
    };
    let i = [0.3, -0.7, 1.1];
    let up = vec![vec![1.0, 0.5, -0.2]; 1];
    let one = QuantConfig { timesteps: 1, ..cfg };
    let one_c = QuantConfig { timesteps: 1, ..chained };
    let g = tawq_backward(&up, &tawq_forward(&i, &one).unwrap(), &one).unwrap();
    let gc = tawq_backward(&up, &tawq_forward(&i, &one_c).unwrap(), &one_c).unwrap();
    for (a, b) in g.iter().zip(&gc) {
        assert!((b - cfg.sg_scale * a).abs() < 1e-15);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn reverse_mode_matches_unrolled_expansion(
        i in prop::collection::vec(-2.5f64..2.5, 1..12),
        steps in 1usize..=4,
        n in prop::sample::select(vec![1u32, 2, 4]),
        lambda in 0.05f64..0.95,
        seed in any::<u64>(),
    ) {
        let cfg = QuantConfig { lambda, n_level: n, timesteps: steps, ..QuantConfig::default() };
        let state = tawq_forward(&i, &cfg).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let up: Vec<Vec<f64>> = (0..steps).map(|_| (0..i.len()).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
        let fast = tawq_backward(&up, &state, &cfg).unwrap();
        let slow = literal_gradient(&up, &state.c_s, &state.w_q, &cfg);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() <= 1e-10 * a.abs().max(b.abs()).max(1e-300), "{} vs {}", a, b);
        }
    }
}
