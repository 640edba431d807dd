//! Pack ternary and 4-bit weights, then run the add/subtract-only kernel on a
//! spike matrix and check it against an integer dot product.
//!
//! cargo run --release --example packed_kernels -- [fan_in] [positions]

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tawq::runtime::{ac_only_matmul, pack_levels, pack_ternary};

fn main() -> tawq::Result<()> {
    let mut args = std::env::args().skip(1);
    let fan_in: usize = args.next().map_or(576, |s| s.parse().expect("fan_in"));
    let positions: usize = args.next().map_or(256, |s| s.parse().expect("positions"));
    let (steps, out_channels) = (4, 64);
    let mut rng = ChaCha8Rng::seed_from_u64(11);

    let w: Vec<i32> = (0..steps * out_channels * fan_in).map(|_| rng.gen_range(-1..=1)).collect();
    let packed = pack_ternary(&w, vec![steps, out_channels, fan_in])?;
    println!(
        "{} ternary weights in {} bytes ({:.1}x smaller than f32)",
        w.len(),
        packed.codes.len(),
        (w.len() * 4) as f64 / packed.codes.len() as f64
    );
    println!("first byte {:#04x} from lanes {:?}", packed.codes[0], &w[..4]);

    let spikes: Vec<u8> = (0..fan_in * positions).map(|_| u8::from(rng.gen_bool(0.2))).collect();
    let start = Instant::now();
    let mut mismatches = 0;
    for t in 0..steps {
        let acc = ac_only_matmul(&packed, t, &spikes, positions)?;
        for c in 0..out_channels {
            let row = &w[(t * out_channels + c) * fan_in..][..fan_in];
            for p in 0..positions {
                let want: i64 = (0..fan_in).map(|k| row[k] as i64 * spikes[k * positions + p] as i64).sum();
                mismatches += usize::from(acc[c * positions + p] != want);
            }
        }
    }
    println!("{steps} steps x {out_channels}x{fan_in}x{positions}: {mismatches} mismatches ({:.2?})", start.elapsed());

    let levels: Vec<i32> = (0..1000).map(|_| rng.gen_range(-7..=7)).collect();
    let nibbles = pack_levels(&levels, vec![1000], 7)?;
    println!(
        "4-bit levels: {} values in {} bytes, round trip {}",
        levels.len(),
        nibbles.codes.len(),
        nibbles.unpack()? == levels
    );
    Ok(())
}
