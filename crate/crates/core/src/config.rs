//! Run configuration: one TOML document with a strict schema.
//!
//! ```toml
//! [network]
//! precision = "tawq"          # or "full-precision"
//! quantize_first = false
//! layers = [
//!   { kind = "qlinear", out_features = 32 },
//!   { kind = "bn" },
//!   { kind = "lif" },
//!   { kind = "qlinear", out_features = 2 },
//! ]
//!
//! [quant]     # lambda, c_th, n_level, timesteps, epsilon, sg_scale, sg_chain_factor
//! [train]     # lr, optimizer, schedule, epochs, batch_size, seed, ...
//! [lif]       # v_threshold, v_reset, tau, sg_scale_neuron
//! [dataset]
//! kind = "synthetic-temporal-xor"
//!
//! [output]
//! checkpoint = "run.tawq"
//! metrics = "metrics.jsonl"
//! ```

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::HardwareConfig;
use crate::data::DatasetSpec;
use crate::error::{Result, TawqError};
use crate::layers::{BuildOptions, LayerSpec, LifConfig, Network, Precision};
use crate::quant::QuantConfig;
use crate::train::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    #[serde(default)]
    pub precision: Precision,
    #[serde(default)]
    pub quantize_first: bool,
    pub layers: Vec<LayerSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    pub checkpoint: PathBuf,
    pub metrics: PathBuf,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            checkpoint: PathBuf::from("run.tawq"),
            metrics: PathBuf::from("metrics.jsonl"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub network: NetworkConfig,
    #[serde(default)]
    pub quant: QuantConfig,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub lif: LifConfig,
    pub dataset: DatasetSpec,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub hardware: HardwareConfig,
}

fn config_err(path: impl Into<String>, message: impl Into<String>) -> TawqError {
    TawqError::Config {
        path: path.into(),
        message: message.into(),
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let de = toml::Deserializer::parse(text).map_err(|e| config_err("<document>", e.message()))?;
        let cfg: RunConfig = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            config_err(if path == "." { "<root>".into() } else { path }, e.inner().message())
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| config_err(path.display().to_string(), format!("cannot read: {e}")))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| config_err("<document>", e.to_string()))
    }

    /// Cross-section checks the schema cannot express.
    pub fn validate(&self) -> Result<()> {
        let wrap = |section: &str, e: TawqError| match e {
            TawqError::Param(m) => config_err(section, m),
            other => other,
        };
        self.quant.validate().map_err(|e| wrap("quant", e))?;
        self.lif.validate().map_err(|e| wrap("lif", e))?;
        self.train.validate().map_err(|e| wrap("train", e))?;
        if self.quant.timesteps != self.dataset.timesteps {
            return Err(config_err(
                "quant.timesteps",
                format!(
                    "{} differs from dataset.timesteps = {}",
                    self.quant.timesteps, self.dataset.timesteps
                ),
            ));
        }
        if self.network.layers.is_empty() {
            return Err(config_err("network.layers", "at least one layer is required"));
        }
        if !(0.0..1.0).contains(&self.dataset.test_fraction) {
            return Err(config_err("dataset.test_fraction", "must lie in [0, 1)"));
        }
        Ok(())
    }

    pub fn build_options(&self) -> BuildOptions {
        BuildOptions {
            precision: self.network.precision,
            quantize_first: self.network.quantize_first,
            ablate_temporal: self.train.ablate_temporal,
            quant: self.quant,
            lif: self.lif,
        }
    }

    /// Freshly initialized network seeded from `train.seed`.
    pub fn build_network(&self, input_shape: &[usize]) -> Result<Network> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.train.seed);
        Network::build(
            input_shape,
            self.quant.timesteps,
            &self.network.layers,
            &self.build_options(),
            &mut rng,
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
[network]
layers = [{ kind = "qlinear", out_features = 4 }, { kind = "lif" }, { kind = "qlinear", out_features = 2 }]

[dataset]
kind = "synthetic-temporal-xor"
"#;

    #[test]
    fn minimal_document_parses_with_defaults() {
        let cfg = RunConfig::from_toml(MINIMAL).unwrap();
        assert_eq!(cfg.quant, QuantConfig::default());
        assert_eq!(cfg.network.precision, Precision::Tawq);
        assert_eq!(RunConfig::from_toml(&cfg.to_toml().unwrap()).unwrap(), cfg);
    }

    #[test]
    fn missing_field_names_the_path() {
        let err = RunConfig::from_toml("[network]\nlayers = []\n").unwrap_err();
        assert_eq!(err.exit_code(), 2);
        assert!(err.to_string().contains("dataset"), "{err}");
        let err = RunConfig::from_toml("[network]\n[dataset]\nkind = \"raster-grid\"\n").unwrap_err();
        assert!(err.to_string().contains("network") && err.to_string().contains("layers"), "{err}");
    }

    #[test]
    fn unknown_key_rejected() {
        let text = format!("{MINIMAL}\n[quant]\nlamda = 0.5\n");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("quant"), "{err}");
        assert!(err.to_string().contains("lamda"), "{err}");
    }

    #[test]
    fn timesteps_must_agree() {
        let text = format!("{MINIMAL}timesteps = 8\n");
        let err = RunConfig::from_toml(&text).unwrap_err();
        assert!(err.to_string().contains("quant.timesteps"), "{err}");
    }
}
