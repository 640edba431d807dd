//! Trace the temporal quantizer for a few fixed stimuli: state `C_s`, integer
//! weight and the fraction of steps at each level.
//!
//! cargo run --example quantizer_dynamics -- [timesteps] [lambda]

use tawq::quant::{memoryless_forward, tawq_forward, QuantConfig};

fn main() -> tawq::Result<()> {
    let mut args = std::env::args().skip(1);
    let timesteps: usize = args.next().map_or(12, |s| s.parse().expect("timesteps"));
    let lambda: f64 = args.next().map_or(0.5, |s| s.parse().expect("lambda"));
    let cfg = QuantConfig {
        lambda,
        timesteps,
        ..QuantConfig::default()
    };
    cfg.validate()?;

    let stimuli = [-0.9, -0.45, -0.2, 0.1, 0.3, 0.45, 0.6, 1.2];
    let temporal = tawq_forward(&stimuli, &cfg)?;
    let flat = memoryless_forward(&stimuli, &cfg)?;
    println!("lambda {lambda}  c_th {}  T {timesteps}\n", cfg.c_th);
    for (i, &s) in stimuli.iter().enumerate() {
        let trace: String = temporal
            .w_q
            .iter()
            .map(|w| match w[i] {
                1 => '+',
                -1 => '-',
                _ => '.',
            })
            .collect();
        let nonzero = temporal.w_q.iter().filter(|w| w[i] != 0).count();
        println!(
            "I_n {s:>5.2}  w {trace}  active {nonzero:>2}/{timesteps}  memoryless {:>2}  C_s[T-1] {:>8.5}",
            flat.w_q[0][i],
            temporal.c_s[timesteps - 1][i]
        );
    }
    Ok(())
}
