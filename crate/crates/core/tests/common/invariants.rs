//! Property bodies shared by the proptest suite and the acceptance report.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use tawq::analysis::{entropy_of, weight_entropy, MAX_TERNARY_ENTROPY};
use tawq::layers::{lif_step, LifConfig};
use tawq::quant::{compute_scaling, normalize_stimulus, tawq_forward, QuantConfig};

pub const CASES: u32 = 1000;

pub fn stimulus() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-10.0f64..10.0, 2..40)
}

pub fn quant_config() -> impl Strategy<Value = QuantConfig> {
    (0.0f64..1.0, 0.01f64..1.5, prop::sample::select(vec![1u32, 2, 4, 8]), 1usize..=8).prop_map(
        |(lambda, c_th, n_level, timesteps)| QuantConfig {
            lambda,
            c_th,
            n_level,
            timesteps,
            ..QuantConfig::default()
        },
    )
}

/// Nonzero weights carry the sign of the normalized stimulus.
pub fn sign_consistency(i: &[f64], cfg: &QuantConfig) -> Result<(), TestCaseError> {
    let Ok(i_n) = normalize_stimulus(i, cfg.epsilon) else { return Ok(()) };
    let s = tawq_forward(&i_n, cfg).unwrap();
    for w in &s.w_q {
        for (v, x) in w.iter().zip(&i_n) {
            prop_assert!(*v == 0 || (*v > 0) == (*x > 0.0), "w {} for stimulus {}", v, x);
        }
    }
    Ok(())
}

/// `|C_s[t]| ≤ |I_n|` at every step.
pub fn state_bounded(i: &[f64], cfg: &QuantConfig) -> Result<(), TestCaseError> {
    let Ok(i_n) = normalize_stimulus(i, cfg.epsilon) else { return Ok(()) };
    let s = tawq_forward(&i_n, cfg).unwrap();
    for c in &s.c_s {
        for (v, x) in c.iter().zip(&i_n) {
            prop_assert!(v.abs() <= x.abs() * (1.0 + 1e-12), "|{}| > |{}|", v, x);
        }
    }
    Ok(())
}

/// LIF outputs are exactly 0 or 1.
pub fn spikes_binary(u: &[f64], x: &[f64], tau: f64) -> Result<(), TestCaseError> {
    let cfg = LifConfig {
        tau,
        ..LifConfig::default()
    };
    let (s, _) = lif_step(u, &x[..u.len()], &cfg).unwrap();
    prop_assert!(s.iter().all(|&v| v == 0.0 || v == 1.0));
    Ok(())
}

/// `α · mean|W| = 1` per nonzero channel, `α = 0` for an all-zero channel.
pub fn alpha_reciprocal(w: &[i32], channels: usize) -> Result<(), TestCaseError> {
    let alpha = compute_scaling(w, channels);
    let k = w.len() / channels;
    for (c, a) in alpha.iter().enumerate() {
        let row = &w[c * k..(c + 1) * k];
        let mean = row.iter().map(|v| v.abs() as f64).sum::<f64>() / k as f64;
        if mean == 0.0 {
            prop_assert_eq!(*a, 0.0);
        } else {
            prop_assert!((a * mean - 1.0).abs() <= 1e-12, "α {} mean {}", a, mean);
        }
    }
    Ok(())
}

/// Level probabilities sum to one and entropy stays within `[0, ln 3]`.
pub fn simplex_closure(w: &[i32]) -> Result<(), TestCaseError> {
    let r = weight_entropy(&[w.to_vec()]).unwrap();
    prop_assert!((r.p_p + r.p_z + r.p_n - 1.0).abs() <= 1e-12);
    prop_assert!(r.entropy >= 0.0 && r.entropy <= MAX_TERNARY_ENTROPY + 1e-9);
    prop_assert!((entropy_of(&[r.p_p, r.p_z, r.p_n]) - r.entropy).abs() <= 1e-15);
    Ok(())
}

fn runner() -> TestRunner {
    TestRunner::new(Config {
        cases: CASES,
        failure_persistence: None,
        ..Config::default()
    })
}

pub fn ternary_tensor() -> impl Strategy<Value = Vec<i32>> {
    prop::collection::vec(-1i32..=1, 1..200)
}

fn fmt<T: std::fmt::Debug>(r: Result<(), proptest::test_runner::TestError<T>>) -> Result<(), String> {
    r.map_err(|e| format!("{e:?}"))
}

/// Run every invariant for [`CASES`] cases; returns `(name, outcome)`.
pub fn run_all() -> Vec<(&'static str, Result<(), String>)> {
    vec![
        (
            "sign consistency",
            fmt(runner().run(&(stimulus(), quant_config()), |(i, c)| sign_consistency(&i, &c))),
        ),
        (
            "|C_s| boundedness",
            fmt(runner().run(&(stimulus(), quant_config()), |(i, c)| state_bounded(&i, &c))),
        ),
        (
            "binary spikes",
            fmt(runner().run(
                &(
                    prop::collection::vec(-3.0f64..3.0, 1..30),
                    prop::collection::vec(-5.0f64..5.0, 30),
                    1.01f64..10.0,
                ),
                |(u, x, tau)| spikes_binary(&u, &x, tau),
            )),
        ),
        (
            "alpha reciprocal",
            fmt(runner().run(
                &(1usize..6).prop_flat_map(|c| (prop::collection::vec(-1i32..=1, c..=c * 20), Just(c))),
                |(w, c)| {
                    let k = w.len() / c;
                    alpha_reciprocal(&w[..k * c], c)
                },
            )),
        ),
        ("simplex closure", fmt(runner().run(&ternary_tensor(), |w| simplex_closure(&w)))),
    ]
}
