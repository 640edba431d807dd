//! Command implementations behind the `tawq` binary.

use std::fmt::Write as _;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::analysis::{
    count_sops, energy_hardware, entropy_report, firing_rate_stats, EnergyReport, FiringStats, HardwareReport,
    LayerEntropy,
};
use crate::checkpoint::Checkpoint;
use crate::config::RunConfig;
use crate::data::{read_samples, write_samples, Dataset, DatasetSpec};
use crate::error::{Result, TawqError};
use crate::layers::{network_forward, ForwardOptions, Network};
use crate::runtime::{unfolded_inference, InferenceModel, Stage};
use crate::train::train;

/// Command-line settings that take precedence over the configuration file.
#[derive(Debug, Clone, Default)]
pub struct TrainOverrides {
    pub ablate_temporal: bool,
    pub epochs: Option<usize>,
    pub seed: Option<u64>,
    pub checkpoint: Option<PathBuf>,
    pub metrics: Option<PathBuf>,
}

impl TrainOverrides {
    pub fn apply(&self, cfg: &mut RunConfig) {
        cfg.train.ablate_temporal |= self.ablate_temporal;
        if let Some(e) = self.epochs {
            cfg.train.epochs = e;
        }
        if let Some(s) = self.seed {
            cfg.train.seed = s;
        }
        if let Some(p) = &self.checkpoint {
            cfg.output.checkpoint = p.clone();
        }
        if let Some(p) = &self.metrics {
            cfg.output.metrics = p.clone();
        }
    }
}

/// Final numbers of a training run, also stored in the checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrainSummary {
    pub epochs: usize,
    pub seed: u64,
    pub ablate_temporal: bool,
    pub final_train_loss: f64,
    pub test_loss: f64,
    pub test_accuracy: f64,
    pub init_entropy: Option<f64>,
    pub final_entropy: Option<f64>,
}

pub fn cmd_train(config: &Path, overrides: &TrainOverrides) -> Result<TrainSummary> {
    let mut cfg = RunConfig::load(config)?;
    overrides.apply(&mut cfg);
    cfg.validate()?;
    let (train_set, test_set) = cfg.dataset.load_split()?;
    let mut net = cfg.build_network(&train_set.sample_shape)?;
    let mut log = BufWriter::new(File::create(&cfg.output.metrics)?);
    let outcome = train(&mut net, &train_set, &test_set, &cfg.train, &mut log)?;
    log.flush()?;
    let summary = TrainSummary {
        epochs: cfg.train.epochs,
        seed: cfg.train.seed,
        ablate_temporal: cfg.train.ablate_temporal,
        final_train_loss: outcome
            .records
            .iter()
            .rev()
            .find(|r| r.split == "train")
            .map_or(f64::NAN, |r| r.loss),
        test_loss: outcome.test_loss,
        test_accuracy: outcome.test_accuracy,
        init_entropy: outcome.init_entropy,
        final_entropy: outcome.final_entropy,
    };
    let metrics = serde_json::to_string(&summary).map_err(|e| TawqError::Data(e.to_string()))?;
    Checkpoint::from_network(&cfg, metrics, &net)?.save(&cfg.output.checkpoint)?;
    Ok(summary)
}

/// Load an encoded sample file, treating an empty file as a usage error.
pub fn load_input(path: &Path) -> Result<Dataset> {
    if std::fs::metadata(path)?.len() == 0 {
        return Err(TawqError::Config {
            path: path.display().to_string(),
            message: "input file is empty".into(),
        });
    }
    read_samples(path)
}

fn check_compatible(net: &Network, data: &Dataset) -> Result<()> {
    if data.sample_shape != net.input_shape() || data.timesteps != net.timesteps {
        return Err(TawqError::Shape(format!(
            "layer 0 expects {:?} over {} steps, input holds {:?} over {}",
            net.input_shape(),
            net.timesteps,
            data.sample_shape,
            data.timesteps
        )));
    }
    Ok(())
}

/// Test split of the checkpoint's own dataset, or an explicit sample file.
fn report_data(ckpt: &Checkpoint, data: Option<&Path>) -> Result<Dataset> {
    match data {
        Some(p) => load_input(p),
        None => Ok(ckpt.config()?.dataset.load_split()?.1),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Report {
    pub entropy: Vec<LayerEntropy>,
    pub energy: EnergyReport,
    pub hardware: HardwareReport,
    pub firing: FiringStats,
}

pub fn cmd_report(ckpt_path: &Path, data: Option<&Path>, compare: Option<&Path>) -> Result<Report> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let net = ckpt.to_network()?;
    let set = report_data(&ckpt, data)?;
    check_compatible(&net, &set)?;
    let (x, _) = set.all()?;
    let (_, traces) = network_forward(&net, &x, ForwardOptions::default())?;
    let other = match compare {
        Some(p) => {
            let other = Checkpoint::load(p)?.to_network()?;
            check_compatible(&other, &set)?;
            Some(network_forward(&other, &x, ForwardOptions::default())?.1)
        }
        None => None,
    };
    let energy = count_sops(&net, &traces)?;
    let hardware = energy_hardware(&net, Some(&energy), &ckpt.config()?.hardware)?;
    Ok(Report {
        entropy: entropy_report(&net)?,
        firing: firing_rate_stats(&traces, other.as_ref())?,
        energy,
        hardware,
    })
}

impl Report {
    pub fn table(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "weight entropy (nats, max 1.0986)");
        let _ = writeln!(s, "{:>5} {:>3} {:>7} {:>7} {:>7} {:>8} {:>6}", "layer", "n", "p+", "p0", "p-", "H", "α=0");
        for r in &self.entropy {
            let _ = writeln!(
                s,
                "{:>5} {:>3} {:>7.4} {:>7.4} {:>7.4} {:>8.4} {:>6}",
                r.layer, r.n_level, r.p_p, r.p_z, r.p_n, r.entropy, r.zero_alpha_channels
            );
        }
        let _ = writeln!(s, "\nenergy per sample");
        let _ = writeln!(
            s,
            "{:>5} {:>5} {:>12} {:>8} {:>8} {:>14} {:>14}",
            "layer", "quant", "TOPs/step", "sr", "fr", "FLOPs", "SOPs"
        );
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len().max(1) as f64;
        for l in &self.energy.layers {
            let _ = writeln!(
                s,
                "{:>5} {:>5} {:>12} {:>8.4} {:>8.4} {:>14.1} {:>14.3}",
                l.layer,
                if l.quantized { "yes" } else { "no" },
                l.tops,
                mean(&l.synapse_ratio),
                mean(&l.firing_rate),
                l.flops_float,
                l.sops
            );
        }
        let t = &self.energy.totals;
        let _ = writeln!(
            s,
            "E_MAC {:.3} pJ + E_AC {:.3} pJ = {:.3} pJ ({:.3e} mJ)",
            t.e_mac_pj, t.e_ac_pj, t.e_total_pj, t.e_total_mj
        );
        let h = &self.hardware;
        let _ = writeln!(
            s,
            "\nhardware (E_rd units): weight read {:.1}, activation read {:.1}, write {:.1}, compute {:.3}, total {:.1}",
            h.weight_read, h.activation_read, h.write, h.compute, h.total
        );
        let _ = writeln!(s, "\nfiring rates");
        for f in &self.firing.layers {
            let rates: Vec<String> = f.rates.iter().map(|r| format!("{r:.4}")).collect();
            let _ = writeln!(s, "{:>5} mean {:.4}  per step [{}]", f.layer, f.mean, rates.join(", "));
        }
        if let Some(r) = self.firing.correlation {
            let _ = writeln!(s, "pearson r vs comparison: {r:.4}");
        }
        s
    }

    /// One JSON object per line, tagged by `record`.
    pub fn json_lines(&self) -> Result<String> {
        let enc = |v: serde_json::Value| serde_json::to_string(&v).map_err(|e| TawqError::Data(e.to_string()));
        let mut out = Vec::new();
        for r in &self.entropy {
            out.push(enc(serde_json::json!({ "record": "entropy", "row": r }))?);
        }
        for l in &self.energy.layers {
            out.push(enc(serde_json::json!({ "record": "energy_layer", "row": l }))?);
        }
        out.push(enc(serde_json::json!({ "record": "energy_total", "row": self.energy.totals }))?);
        out.push(enc(serde_json::json!({ "record": "hardware", "row": self.hardware }))?);
        for f in &self.firing.layers {
            out.push(enc(serde_json::json!({ "record": "firing", "row": f }))?);
        }
        out.push(enc(serde_json::json!({ "record": "firing_correlation", "pearson": self.firing.correlation }))?);
        Ok(out.join("\n") + "\n")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub predicted: Vec<usize>,
    pub labels: Vec<usize>,
}

impl Predictions {
    pub fn accuracy(&self) -> f64 {
        let hit = self.predicted.iter().zip(&self.labels).filter(|(p, l)| p == l).count();
        hit as f64 / self.labels.len().max(1) as f64
    }
}

pub fn cmd_infer(ckpt_path: &Path, input: &Path, folded: bool) -> Result<Predictions> {
    let data = load_input(input)?;
    if data.is_empty() {
        return Err(TawqError::Config {
            path: input.display().to_string(),
            message: "input file holds no samples".into(),
        });
    }
    let ckpt = Checkpoint::load(ckpt_path)?;
    let (net, model) = InferenceModel::from_checkpoint(&ckpt)?;
    check_compatible(&net, &data)?;
    let (x, labels) = data.all()?;
    let out = if folded {
        model.folded_inference(&x)?
    } else {
        unfolded_inference(&net, &x)?
    };
    Ok(Predictions {
        predicted: out.predictions(net.classes()),
        labels,
    })
}

/// Folded neuron parameters of every folded stage, as JSON.
pub fn cmd_fold(ckpt_path: &Path) -> Result<String> {
    let ckpt = Checkpoint::load(ckpt_path)?;
    let (_, model) = InferenceModel::from_checkpoint(&ckpt)?;
    let stages: Vec<serde_json::Value> = model
        .stages
        .iter()
        .filter_map(|s| match s {
            Stage::Folded { params, lif_layer, .. } => Some(serde_json::json!({
                "lif_layer": lif_layer,
                "timesteps": model.timesteps,
                "channels": params.channels(),
                "rho": params.rho,
                "delta": params.delta,
                "lif": params.lif,
            })),
            _ => None,
        })
        .collect();
    serde_json::to_string_pretty(&stages).map_err(|e| TawqError::Data(e.to_string()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Split {
    #[default]
    All,
    Train,
    Test,
}

/// Generate a dataset and write the chosen split as a sample file.
pub fn cmd_gen_data(spec: &DatasetSpec, split: Split, out: &Path) -> Result<usize> {
    let data = match split {
        Split::All => spec.generate()?,
        Split::Train => spec.load_split()?.0,
        Split::Test => spec.load_split()?.1,
    };
    write_samples(out, &data)?;
    Ok(data.len())
}
