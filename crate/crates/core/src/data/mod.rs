//! Desk-scale datasets, spike encoders and the on-disk sample formats.

mod encode;
mod files;

use std::path::PathBuf;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};
use crate::layers::Activation;

pub use encode::{direct_encode, encode, latency_encode, rate_encode, Encoder};
pub use files::{read_raster, read_samples, write_raster, write_samples, RasterGrid};

/// Input channels per group in the temporal XOR task.
pub const XOR_GROUP_CHANNELS: usize = 4;

#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    /// `(T, sample_len)`, timestep-major.
    pub input: Vec<f64>,
    pub label: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub timesteps: usize,
    pub sample_shape: Vec<usize>,
    pub classes: usize,
    pub samples: Vec<Sample>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn sample_len(&self) -> usize {
        self.sample_shape.iter().product()
    }

    pub fn batch(&self, idx: &[usize]) -> Result<(Activation, Vec<usize>)> {
        let x = Activation::from_samples(
            self.timesteps,
            self.sample_shape.clone(),
            idx.iter().map(|&i| self.samples[i].input.as_slice()),
        )?;
        Ok((x, idx.iter().map(|&i| self.samples[i].label).collect()))
    }

    pub fn all(&self) -> Result<(Activation, Vec<usize>)> {
        self.batch(&(0..self.len()).collect::<Vec<_>>())
    }

    pub fn is_binary(&self) -> bool {
        self.samples.iter().flat_map(|s| &s.input).all(|&v| v == 0.0 || v == 1.0)
    }

    fn subset(&self, idx: &[usize]) -> Dataset {
        Dataset {
            timesteps: self.timesteps,
            sample_shape: self.sample_shape.clone(),
            classes: self.classes,
            samples: idx.iter().map(|&i| self.samples[i].clone()).collect(),
        }
    }

    /// Deterministic train/test partition.
    pub fn split(&self, test_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
        if !(0.0..1.0).contains(&test_fraction) {
            return Err(TawqError::Data(format!("test fraction {test_fraction} must lie in [0, 1)")));
        }
        let mut idx: Vec<usize> = (0..self.len()).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed ^ 0x5b11_7e57));
        let n_test = (self.len() as f64 * test_fraction).round() as usize;
        let (test, train) = idx.split_at(n_test);
        Ok((self.subset(train), self.subset(test)))
    }
}

/// Random stream for sample `i`, independent of every other sample.
pub(crate) fn sample_rng(seed: u64, i: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i);
    rng
}

/// Two channel groups, two time windows; the label is the XOR of group A
/// being active in the first window and group B in the second.
///
/// Active channels spike with probability `1 − noise` at every step of their
/// window, everything else with probability `noise`.
pub fn gen_temporal_xor(n_samples: usize, timesteps: usize, noise: f64, seed: u64) -> Result<Dataset> {
    if timesteps < 2 {
        return Err(TawqError::Data("temporal XOR needs at least 2 timesteps".into()));
    }
    if !(0.0..=0.5).contains(&noise) {
        return Err(TawqError::Data(format!("noise {noise} must lie in [0, 0.5]")));
    }
    let f = 2 * XOR_GROUP_CHANNELS;
    let half = timesteps / 2;
    let samples = (0..n_samples)
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let a = rng.gen_bool(0.5);
            let b = rng.gen_bool(0.5);
            let mut input = vec![0.0; timesteps * f];
            for t in 0..timesteps {
                for ch in 0..f {
                    let group_a = ch < XOR_GROUP_CHANNELS;
                    let active = if group_a { a && t < half } else { b && t >= half };
                    let p = if active { 1.0 - noise } else { noise };
                    if p > 0.0 && rng.gen_bool(p) {
                        input[t * f + ch] = 1.0;
                    }
                }
            }
            Sample {
                input,
                label: (a ^ b) as usize,
            }
        })
        .collect();
    Ok(Dataset {
        timesteps,
        sample_shape: vec![f],
        classes: 2,
        samples,
    })
}

/// The construction rule of [`gen_temporal_xor`], read back from spikes.
pub fn xor_rule(input: &[f64], timesteps: usize) -> usize {
    let f = 2 * XOR_GROUP_CHANNELS;
    let half = timesteps / 2;
    let a = (0..half).any(|t| input[t * f..t * f + XOR_GROUP_CHANNELS].iter().any(|&v| v > 0.0));
    let b = (half..timesteps).any(|t| input[t * f + XOR_GROUP_CHANNELS..(t + 1) * f].iter().any(|&v| v > 0.0));
    (a ^ b) as usize
}

/// Class prototypes in `[0, 1]^features`, perturbed per sample and encoded.
pub fn gen_rate_patterns(
    n_samples: usize,
    classes: usize,
    features: usize,
    timesteps: usize,
    noise: f64,
    encoder: Encoder,
    seed: u64,
) -> Result<Dataset> {
    if classes < 2 || features == 0 {
        return Err(TawqError::Data("rate patterns need at least 2 classes and 1 feature".into()));
    }
    let mut proto_rng = sample_rng(seed, u64::MAX);
    let protos: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..features).map(|_| proto_rng.gen::<f64>()).collect())
        .collect();
    let samples = (0..n_samples)
        .map(|i| {
            let mut rng = sample_rng(seed, i as u64);
            let label = i % classes;
            let x: Vec<f64> = protos[label]
                .iter()
                .map(|p| (p + noise * rng.gen_range(-1.0..1.0)).clamp(0.0, 1.0))
                .collect();
            let input = encode(&x, encoder, timesteps, rng.gen())?;
            Ok(Sample { input, label })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        timesteps,
        sample_shape: vec![features],
        classes,
        samples,
    })
}

/// Encode an image grid into a `(C, H, W)` dataset.
pub fn raster_dataset(grid: &RasterGrid, encoder: Encoder, timesteps: usize, seed: u64) -> Result<Dataset> {
    let len = grid.channels * grid.height * grid.width;
    let classes = grid.labels.iter().copied().max().map_or(0, |m| m as usize + 1);
    let samples = (0..grid.count)
        .map(|i| {
            let x: Vec<f64> = grid.pixels[i * len..(i + 1) * len].iter().map(|&p| p as f64 / 255.0).collect();
            let input = encode(&x, encoder, timesteps, sample_rng(seed, i as u64).gen())?;
            Ok(Sample {
                input,
                label: grid.labels[i] as usize,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset {
        timesteps,
        sample_shape: vec![grid.channels, grid.height, grid.width],
        classes: classes.max(2),
        samples,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DatasetKind {
    SyntheticTemporalXor,
    SyntheticRatePatterns,
    RasterGrid,
}

/// Reproducible dataset description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetSpec {
    pub kind: DatasetKind,
    #[serde(default = "DatasetSpec::default_samples")]
    pub n_samples: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub encoder: Encoder,
    #[serde(default = "DatasetSpec::default_timesteps")]
    pub timesteps: usize,
    #[serde(default = "DatasetSpec::default_noise")]
    pub noise: f64,
    #[serde(default = "DatasetSpec::default_test_fraction")]
    pub test_fraction: f64,
    /// Rate patterns only.
    #[serde(default = "DatasetSpec::default_classes")]
    pub classes: usize,
    /// Rate patterns only.
    #[serde(default = "DatasetSpec::default_features")]
    pub features: usize,
    /// Raster grid file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
}

impl DatasetSpec {
    fn default_samples() -> usize {
        1000
    }
    fn default_timesteps() -> usize {
        4
    }
    fn default_noise() -> f64 {
        0.05
    }
    fn default_test_fraction() -> f64 {
        0.2
    }
    fn default_classes() -> usize {
        4
    }
    fn default_features() -> usize {
        16
    }

    pub fn new(kind: DatasetKind) -> Self {
        Self {
            kind,
            n_samples: Self::default_samples(),
            seed: 0,
            encoder: Encoder::default(),
            timesteps: Self::default_timesteps(),
            noise: Self::default_noise(),
            test_fraction: Self::default_test_fraction(),
            classes: Self::default_classes(),
            features: Self::default_features(),
            path: None,
        }
    }

    pub fn generate(&self) -> Result<Dataset> {
        match self.kind {
            DatasetKind::SyntheticTemporalXor => gen_temporal_xor(self.n_samples, self.timesteps, self.noise, self.seed),
            DatasetKind::SyntheticRatePatterns => gen_rate_patterns(
                self.n_samples,
                self.classes,
                self.features,
                self.timesteps,
                self.noise,
                self.encoder,
                self.seed,
            ),
            DatasetKind::RasterGrid => {
                let path = self
                    .path
                    .as_ref()
                    .ok_or_else(|| TawqError::Data("raster-grid datasets need a `path`".into()))?;
                let grid = read_raster(path)?;
                raster_dataset(&grid, self.encoder, self.timesteps, self.seed)
            }
        }
    }

    /// Generate and split into `(train, test)`.
    pub fn load_split(&self) -> Result<(Dataset, Dataset)> {
        self.generate()?.split(self.test_fraction, self.seed)
    }
}
