//! Bit-packed integer weights.
//!
//! Ternary tensors use 2-bit codes, four per byte, lane 0 in the low bits:
//! `00 → 0`, `01 → +1`, `10 → −1`; `11` is invalid. Multi-level tensors with
//! `n ≤ 7` use 4-bit two's complement codes, two per byte, with `1000`
//! invalid. Elements are stored row-major over `(T, C_o, C_i, k_h, k_w)`.

use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PackedTernaryTensor {
    pub shape: Vec<usize>,
    /// Bits per element, 2 or 4.
    pub bits: u8,
    pub codes: Vec<u8>,
}

fn encode2(v: i32) -> Option<u8> {
    match v {
        0 => Some(0b00),
        1 => Some(0b01),
        -1 => Some(0b10),
        _ => None,
    }
}

fn decode2(code: u8) -> Option<i32> {
    match code {
        0b00 => Some(0),
        0b01 => Some(1),
        0b10 => Some(-1),
        _ => None,
    }
}

fn encode4(v: i32) -> Option<u8> {
    (-7..=7).contains(&v).then_some((v as u8) & 0x0f)
}

fn decode4(code: u8) -> Option<i32> {
    (code != 0b1000).then_some(((code << 4) as i8 >> 4) as i32)
}

fn pack(w: &[i32], shape: Vec<usize>, bits: u8) -> Result<PackedTernaryTensor> {
    if shape.iter().product::<usize>() != w.len() {
        return Err(TawqError::Shape(format!("{} weights do not fill shape {shape:?}", w.len())));
    }
    let per_byte = 8 / bits as usize;
    let mut codes = vec![0u8; w.len().div_ceil(per_byte)];
    for (k, &v) in w.iter().enumerate() {
        let code = if bits == 2 { encode2(v) } else { encode4(v) }
            .ok_or_else(|| TawqError::Encode(format!("weight {v} at index {k} has no {bits}-bit code")))?;
        codes[k / per_byte] |= code << (bits as usize * (k % per_byte));
    }
    Ok(PackedTernaryTensor { shape, bits, codes })
}

/// Pack `{−1, 0, +1}` weights two bits each.
pub fn pack_ternary(w: &[i32], shape: Vec<usize>) -> Result<PackedTernaryTensor> {
    pack(w, shape, 2)
}

/// Pack weights in `[−n, n]`: two bits for `n = 1`, four bits up to `n = 7`.
pub fn pack_levels(w: &[i32], shape: Vec<usize>, n_level: u32) -> Result<PackedTernaryTensor> {
    match n_level {
        1 => pack(w, shape, 2),
        2..=7 => pack(w, shape, 4),
        _ => Err(TawqError::Encode(format!("no packed layout for n = {n_level}"))),
    }
}

impl PackedTernaryTensor {
    pub fn len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Elements per leading (timestep) index.
    pub fn step_len(&self) -> usize {
        self.shape[1..].iter().product()
    }

    #[inline]
    pub fn get(&self, k: usize) -> Result<i32> {
        let per_byte = 8 / self.bits as usize;
        let mask = (1u8 << self.bits) - 1;
        let code = (self.codes[k / per_byte] >> (self.bits as usize * (k % per_byte))) & mask;
        if self.bits == 2 { decode2(code) } else { decode4(code) }
            .ok_or_else(|| TawqError::Encode(format!("invalid code {code:#b} at index {k}")))
    }

    pub fn unpack(&self) -> Result<Vec<i32>> {
        if !matches!(self.bits, 2 | 4) {
            return Err(TawqError::Encode(format!("unsupported code width {}", self.bits)));
        }
        let per_byte = 8 / self.bits as usize;
        if self.codes.len() != self.len().div_ceil(per_byte) {
            return Err(TawqError::Encode("code buffer length does not match the shape".into()));
        }
        (0..self.len()).map(|k| self.get(k)).collect()
    }
}

/// Integer weight-times-spike product for one timestep using additions and
/// subtractions only.
///
/// `spikes` is a `(fan_in, positions)` patch matrix of 0/1 entries; the
/// result is `(C_o, positions)`.
pub fn ac_only_matmul(packed: &PackedTernaryTensor, t: usize, spikes: &[u8], positions: usize) -> Result<Vec<i64>> {
    if packed.shape.len() < 2 || t >= packed.shape[0] {
        return Err(TawqError::Shape(format!("timestep {t} outside packed shape {:?}", packed.shape)));
    }
    let co = packed.shape[1];
    let fan_in = packed.step_len() / co;
    if spikes.len() != fan_in * positions {
        return Err(TawqError::Shape(format!(
            "spike matrix has {} entries, expected {fan_in} x {positions}",
            spikes.len()
        )));
    }
    if let Some(&bad) = spikes.iter().find(|&&s| s > 1) {
        return Err(TawqError::Data(format!("spike value {bad} is not binary")));
    }
    let base = t * packed.step_len();
    let mut out = vec![0i64; co * positions];
    for c in 0..co {
        let acc = &mut out[c * positions..(c + 1) * positions];
        for i in 0..fan_in {
            let w = packed.get(base + c * fan_in + i)?;
            if w == 0 {
                continue;
            }
            let row = &spikes[i * positions..(i + 1) * positions];
            for _ in 0..w.unsigned_abs() {
                if w > 0 {
                    acc.iter_mut().zip(row).for_each(|(a, &s)| *a += s as i64);
                } else {
                    acc.iter_mut().zip(row).for_each(|(a, &s)| *a -= s as i64);
                }
            }
        }
    }
    Ok(out)
}
