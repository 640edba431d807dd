mod common;

use common::invariants::*;
use proptest::prelude::*;
use tawq::analysis::{entropy_of, energy_total, layer_sops, MAX_TERNARY_ENTROPY};
use tawq::data::rate_encode;
use tawq::quant::{memoryless_forward, normalize_stimulus, tawq_forward};
use tawq::runtime::{pack_levels, pack_ternary};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(CASES))]

    #[test]
    fn weights_follow_stimulus_sign((i, cfg) in (stimulus(), quant_config())) {
        sign_consistency(&i, &cfg)?;
    }

    #[test]
    fn state_never_exceeds_stimulus((i, cfg) in (stimulus(), quant_config())) {
        state_bounded(&i, &cfg)?;
    }

    #[test]
    fn lif_spikes_are_binary(
        u in prop::collection::vec(-3.0f64..3.0, 1..30),
        x in prop::collection::vec(-5.0f64..5.0, 30),
        tau in 1.01f64..10.0,
    ) {
        spikes_binary(&u, &x, tau)?;
    }

    #[test]
    fn alpha_is_reciprocal_mean((w, c) in (1usize..6).prop_flat_map(|c| (prop::collection::vec(-1i32..=1, c * 4), Just(c)))) {
        alpha_reciprocal(&w, c)?;
    }

    #[test]
    fn probabilities_close_on_simplex(w in ternary_tensor()) {
        simplex_closure(&w)?;
    }

    #[test]
    fn ternary_codec_is_bijective(w in ternary_tensor()) {
        let p = pack_ternary(&w, vec![w.len()]).unwrap();
        prop_assert_eq!(p.codes.len(), w.len().div_ceil(4));
        prop_assert_eq!(p.unpack().unwrap(), w);
    }

    #[test]
    fn nibble_codec_is_bijective(w in prop::collection::vec(-7i32..=7, 1..100), n in 2u32..=7) {
        let w: Vec<i32> = w.into_iter().map(|v| v.clamp(-(n as i32), n as i32)).collect();
        let p = pack_levels(&w, vec![w.len()], n).unwrap();
        prop_assert_eq!(p.unpack().unwrap(), w);
    }

    #[test]
    fn entropy_peaks_only_at_uniform(a in 0.0f64..1.0, b in 0.0f64..1.0) {
        let (p, q) = (a.min(b), a.max(b));
        let probs = [p, q - p, 1.0 - q];
        prop_assume!(probs.iter().any(|v| (v - 1.0 / 3.0).abs() > 1e-6));
        prop_assert!(entropy_of(&probs) < MAX_TERNARY_ENTROPY);
    }

    #[test]
    fn sops_monotone_in_firing_rate(
        fr in prop::collection::vec(0.0f64..1.0, 1..8),
        bump in 0.0f64..0.5,
        k in 0usize..8,
        sr in 0.0f64..1.0,
        tops in 1.0f64..1e6,
    ) {
        let k = k % fr.len();
        let srs = vec![sr; fr.len()];
        let mut up = fr.clone();
        up[k] = (up[k] + bump).min(1.0);
        prop_assert!(layer_sops(&up, &srs, tops) >= layer_sops(&fr, &srs, tops));
    }

    #[test]
    fn energy_is_linear(flops in 0.0f64..1e9, sops in 0.0f64..1e9, s in 0.0f64..100.0) {
        let base = energy_total(flops, sops);
        let scaled = energy_total(flops * s, sops * s);
        prop_assert!((scaled.e_total_pj - s * base.e_total_pj).abs() <= 1e-9 * scaled.e_total_pj.max(1.0));
    }

    #[test]
    fn memoryless_weights_are_constant((i, cfg) in (stimulus(), quant_config())) {
        let Ok(i_n) = normalize_stimulus(&i, cfg.epsilon) else { return Ok(()) };
        let s = memoryless_forward(&i_n, &cfg).unwrap();
        prop_assert!(s.w_q.windows(2).all(|p| p[0] == p[1]));
    }

    #[test]
    fn forward_is_deterministic((i, cfg) in (stimulus(), quant_config())) {
        let Ok(i_n) = normalize_stimulus(&i, cfg.epsilon) else { return Ok(()) };
        prop_assert_eq!(tawq_forward(&i_n, &cfg).unwrap(), tawq_forward(&i_n, &cfg).unwrap());
    }

    #[test]
    fn rate_encoding_is_binary(x in prop::collection::vec(0.0f64..=1.0, 1..20), seed in any::<u64>()) {
        let s = rate_encode(&x, 5, seed).unwrap();
        prop_assert!(s.iter().all(|&v| v == 0.0 || v == 1.0));
    }
}
