//! Binary file formats, all little-endian.
//!
//! Raster grid (`TWRG`):
//!
//! | field    | type            |
//! |----------|-----------------|
//! | magic    | `b"TWRG"`       |
//! | n, c, h, w | `u32` each    |
//! | pixels   | `n·c·h·w` × `u8`, sample-major, row-major within |
//! | labels   | `n` × `u8`      |
//!
//! Encoded samples (`TWDS`), as written by `gen-data` and read by `infer`:
//!
//! | field     | type |
//! |-----------|------|
//! | magic     | `b"TWDS"` |
//! | version   | `u16` = 1 |
//! | payload   | `u8`: 0 = binary `u8` values, 1 = `f64` values |
//! | timesteps | `u32` |
//! | ndim      | `u8`, then `ndim` × `u32` dims |
//! | classes   | `u32` |
//! | count     | `u32` |
//! | samples   | per sample `T·prod(dims)` values then a `u32` label |

use std::fs;
use std::io::{Cursor, Read};
use std::path::Path;

use crate::data::{Dataset, Sample};
use crate::error::{Result, TawqError};

const RASTER_MAGIC: &[u8; 4] = b"TWRG";
const SAMPLES_MAGIC: &[u8; 4] = b"TWDS";
const SAMPLES_VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RasterGrid {
    pub count: usize,
    pub channels: usize,
    pub height: usize,
    pub width: usize,
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

fn short(what: &str) -> TawqError {
    TawqError::Data(format!("file truncated while reading {what}"))
}

fn take<const N: usize>(r: &mut Cursor<&[u8]>, what: &str) -> Result<[u8; N]> {
    let mut b = [0u8; N];
    r.read_exact(&mut b).map_err(|_| short(what))?;
    Ok(b)
}

fn take_u32(r: &mut Cursor<&[u8]>, what: &str) -> Result<usize> {
    Ok(u32::from_le_bytes(take(r, what)?) as usize)
}

fn take_vec(r: &mut Cursor<&[u8]>, len: usize, what: &str) -> Result<Vec<u8>> {
    let remaining = r.get_ref().len() - r.position() as usize;
    if len > remaining {
        return Err(short(what));
    }
    let mut v = vec![0u8; len];
    r.read_exact(&mut v).map_err(|_| short(what))?;
    Ok(v)
}

fn put_u32(out: &mut Vec<u8>, v: usize) -> Result<()> {
    let v = u32::try_from(v).map_err(|_| TawqError::Data(format!("{v} does not fit a u32 field")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

pub fn write_raster(path: &Path, grid: &RasterGrid) -> Result<()> {
    let len = grid.count * grid.channels * grid.height * grid.width;
    if grid.pixels.len() != len || grid.labels.len() != grid.count {
        return Err(TawqError::Data("raster grid buffers do not match its dims".into()));
    }
    let mut out = RASTER_MAGIC.to_vec();
    for d in [grid.count, grid.channels, grid.height, grid.width] {
        put_u32(&mut out, d)?;
    }
    out.extend_from_slice(&grid.pixels);
    out.extend_from_slice(&grid.labels);
    fs::write(path, out)?;
    Ok(())
}

pub fn read_raster(path: &Path) -> Result<RasterGrid> {
    let bytes = fs::read(path)?;
    let mut r = Cursor::new(bytes.as_slice());
    if &take::<4>(&mut r, "magic")? != RASTER_MAGIC {
        return Err(TawqError::Data(format!("{} is not a raster grid file", path.display())));
    }
    let count = take_u32(&mut r, "count")?;
    let channels = take_u32(&mut r, "channels")?;
    let height = take_u32(&mut r, "height")?;
    let width = take_u32(&mut r, "width")?;
    let pixels = take_vec(&mut r, count * channels * height * width, "pixels")?;
    let labels = take_vec(&mut r, count, "labels")?;
    Ok(RasterGrid {
        count,
        channels,
        height,
        width,
        pixels,
        labels,
    })
}

pub fn write_samples(path: &Path, data: &Dataset) -> Result<()> {
    let binary = data.is_binary();
    let mut out = SAMPLES_MAGIC.to_vec();
    out.extend_from_slice(&SAMPLES_VERSION.to_le_bytes());
    out.push(if binary { 0 } else { 1 });
    put_u32(&mut out, data.timesteps)?;
    out.push(data.sample_shape.len() as u8);
    for &d in &data.sample_shape {
        put_u32(&mut out, d)?;
    }
    put_u32(&mut out, data.classes)?;
    put_u32(&mut out, data.len())?;
    for s in &data.samples {
        if binary {
            out.extend(s.input.iter().map(|&v| v as u8));
        } else {
            s.input.iter().for_each(|v| out.extend_from_slice(&v.to_le_bytes()));
        }
        put_u32(&mut out, s.label)?;
    }
    fs::write(path, out)?;
    Ok(())
}

pub fn read_samples(path: &Path) -> Result<Dataset> {
    let bytes = fs::read(path)?;
    if bytes.is_empty() {
        return Err(TawqError::Data(format!("{} is empty", path.display())));
    }
    let mut r = Cursor::new(bytes.as_slice());
    if &take::<4>(&mut r, "magic")? != SAMPLES_MAGIC {
        return Err(TawqError::Data(format!("{} is not a sample file", path.display())));
    }
    let version = u16::from_le_bytes(take(&mut r, "version")?);
    if version != SAMPLES_VERSION {
        return Err(TawqError::Data(format!("unsupported sample file version {version}")));
    }
    let [payload] = take::<1>(&mut r, "payload kind")?;
    let timesteps = take_u32(&mut r, "timesteps")?;
    let [ndim] = take::<1>(&mut r, "ndim")?;
    let sample_shape = (0..ndim).map(|_| take_u32(&mut r, "dims")).collect::<Result<Vec<_>>>()?;
    let classes = take_u32(&mut r, "classes")?;
    let count = take_u32(&mut r, "count")?;
    let len = timesteps * sample_shape.iter().product::<usize>();
    let mut samples = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let input = match payload {
            0 => take_vec(&mut r, len, "sample")?.into_iter().map(f64::from).collect(),
            1 => take_vec(&mut r, len * 8, "sample")?
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect(),
            k => return Err(TawqError::Data(format!("unknown payload kind {k}"))),
        };
        let label = take_u32(&mut r, "label")?;
        samples.push(Sample { input, label });
    }
    if (r.position() as usize) != bytes.len() {
        return Err(TawqError::Data("trailing bytes after the last sample".into()));
    }
    Ok(Dataset {
        timesteps,
        sample_shape,
        classes,
        samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::gen_temporal_xor;

    #[test]
    fn samples_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("x.twds");
        let d = gen_temporal_xor(20, 4, 0.1, 2).unwrap();
        write_samples(&p, &d).unwrap();
        assert_eq!(read_samples(&p).unwrap(), d);
    }

    #[test]
    fn raster_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("g.twrg");
        let g = RasterGrid {
            count: 2,
            channels: 1,
            height: 2,
            width: 3,
            pixels: (0..12).map(|v| v * 20).collect(),
            labels: vec![0, 1],
        };
        write_raster(&p, &g).unwrap();
        assert_eq!(read_raster(&p).unwrap(), g);
    }

    #[test]
    fn truncated_file_is_data_error() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.twds");
        let d = gen_temporal_xor(3, 2, 0.0, 0).unwrap();
        write_samples(&p, &d).unwrap();
        let bytes = fs::read(&p).unwrap();
        fs::write(&p, &bytes[..bytes.len() - 2]).unwrap();
        assert!(matches!(read_samples(&p), Err(TawqError::Data(_))));
    }
}
