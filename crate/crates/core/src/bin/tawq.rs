use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tawq::cli::{self, Split, TrainOverrides};
use tawq::data::{DatasetKind, DatasetSpec, Encoder};
use tawq::{RunConfig, TawqError};

#[derive(Parser)]
#[command(name = "tawq", version, about = "Temporal ternary-weight spiking networks")]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Table,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitArg {
    All,
    Train,
    Test,
}

#[derive(Subcommand)]
enum Cmd {
    /// Train from a run configuration; writes a checkpoint and a metrics log.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Quantize every timestep from the stimulus directly.
        #[arg(long)]
        ablate_temporal: bool,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        checkpoint: Option<PathBuf>,
        #[arg(long)]
        metrics: Option<PathBuf>,
    },
    /// Entropy, energy and firing-rate tables for a checkpoint.
    Report {
        checkpoint: PathBuf,
        /// Encoded samples; defaults to the checkpoint's own test split.
        #[arg(long)]
        data: Option<PathBuf>,
        /// Second checkpoint for firing-rate correlation.
        #[arg(long)]
        compare: Option<PathBuf>,
        #[arg(long, value_enum, default_value = "table")]
        format: Format,
    },
    /// Predict classes for an encoded sample file.
    Infer {
        checkpoint: PathBuf,
        input: PathBuf,
        #[arg(long, conflicts_with = "unfolded")]
        folded: bool,
        #[arg(long)]
        unfolded: bool,
    },
    /// Print the folded neuron parameters of a checkpoint.
    Fold { checkpoint: PathBuf },
    /// Write an encoded sample file.
    GenData {
        /// Take the dataset section of a run configuration.
        #[arg(long, conflicts_with = "kind")]
        config: Option<PathBuf>,
        #[arg(long, value_parser = parse_kind)]
        kind: Option<DatasetKind>,
        #[arg(long, default_value_t = 1000)]
        n_samples: usize,
        #[arg(long, default_value_t = 4)]
        timesteps: usize,
        #[arg(long, default_value_t = 0.05)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_parser = parse_encoder, default_value = "rate")]
        encoder: Encoder,
        #[arg(long, value_enum, default_value = "all")]
        split: SplitArg,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_kind(s: &str) -> Result<DatasetKind, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown dataset kind `{s}`"))
}

fn parse_encoder(s: &str) -> Result<Encoder, String> {
    serde_json::from_value(serde_json::Value::String(s.into())).map_err(|_| format!("unknown encoder `{s}`"))
}

fn init_threads() -> Result<(), TawqError> {
    let Ok(raw) = std::env::var("TAWQ_THREADS") else { return Ok(()) };
    let n: usize = raw.parse().ok().filter(|&n| n > 0).ok_or_else(|| TawqError::Config {
        path: "TAWQ_THREADS".into(),
        message: format!("`{raw}` is not a positive integer"),
    })?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| TawqError::Config {
            path: "TAWQ_THREADS".into(),
            message: e.to_string(),
        })
}

fn run(cli: Cli) -> Result<(), TawqError> {
    init_threads()?;
    match cli.cmd {
        Cmd::Train {
            config,
            ablate_temporal,
            epochs,
            seed,
            checkpoint,
            metrics,
        } => {
            let ov = TrainOverrides {
                ablate_temporal,
                epochs,
                seed,
                checkpoint,
                metrics,
            };
            let s = cli::cmd_train(&config, &ov)?;
            println!("{}", serde_json::to_string(&s).expect("summary serializes"));
        }
        Cmd::Report {
            checkpoint,
            data,
            compare,
            format,
        } => {
            let r = cli::cmd_report(&checkpoint, data.as_deref(), compare.as_deref())?;
            match format {
                Format::Table => print!("{}", r.table()),
                Format::Json => print!("{}", r.json_lines()?),
            }
        }
        Cmd::Infer {
            checkpoint,
            input,
            unfolded,
            ..
        } => {
            let p = cli::cmd_infer(&checkpoint, &input, !unfolded)?;
            for (i, (pred, label)) in p.predicted.iter().zip(&p.labels).enumerate() {
                println!("{i}\t{pred}\t{label}");
            }
            eprintln!("accuracy {:.4}", p.accuracy());
        }
        Cmd::Fold { checkpoint } => println!("{}", cli::cmd_fold(&checkpoint)?),
        Cmd::GenData {
            config,
            kind,
            n_samples,
            timesteps,
            noise,
            seed,
            encoder,
            split,
            out,
        } => {
            let spec = match (config, kind) {
                (Some(path), _) => RunConfig::load(&path)?.dataset,
                (None, Some(kind)) => DatasetSpec {
                    n_samples,
                    timesteps,
                    noise,
                    seed,
                    encoder,
                    ..DatasetSpec::new(kind)
                },
                (None, None) => {
                    return Err(TawqError::Config {
                        path: "gen-data".into(),
                        message: "either --config or --kind is required".into(),
                    })
                }
            };
            let split = match split {
                SplitArg::All => Split::All,
                SplitArg::Train => Split::Train,
                SplitArg::Test => Split::Test,
            };
            let n = cli::cmd_gen_data(&spec, split, &out)?;
            eprintln!("wrote {n} samples to {}", out.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
