//! Surrogate-gradient training with backpropagation through time.

mod backward;
mod optim;

use std::io::Write;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::analysis::entropy::network_entropy;
use crate::data::Dataset;
use crate::error::{Location, Result, TawqError};
use crate::layers::{network_forward, ForwardOptions, Network};

pub use backward::{backward_pass, normalization_backward, tawq_backward, GradientBundle};
pub use optim::{clip_and_step, clip_gradients, OptimizerKind, OptimizerState, Schedule, TrainConfig};

/// Mean softmax cross-entropy over the batch and its gradient with respect
/// to the logits.
pub fn cross_entropy(logits: &[f64], labels: &[usize], classes: usize) -> (f64, Vec<f64>) {
    let batch = labels.len();
    let mut grad = vec![0.0; logits.len()];
    let mut loss = 0.0;
    for (b, &y) in labels.iter().enumerate() {
        let row = &logits[b * classes..(b + 1) * classes];
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let z: f64 = exps.iter().sum();
        loss += z.ln() + max - row[y];
        for k in 0..classes {
            let p = exps[k] / z;
            grad[b * classes + k] = (p - if k == y { 1.0 } else { 0.0 }) / batch as f64;
        }
    }
    (loss / batch as f64, grad)
}

pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// One line of the metrics log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    pub accuracy: f64,
    pub entropy_mean: Option<f64>,
    pub grad_norm: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub records: Vec<EpochRecord>,
    /// Mean weight entropy of the quantized layers before the first update.
    pub init_entropy: Option<f64>,
    pub final_entropy: Option<f64>,
    pub test_loss: f64,
    pub test_accuracy: f64,
}

/// Loss and accuracy in inference mode.
pub fn evaluate(net: &Network, data: &Dataset, batch_size: usize) -> Result<(f64, f64)> {
    if data.is_empty() {
        return Err(TawqError::Data("cannot evaluate on an empty dataset".into()));
    }
    let idx: Vec<usize> = (0..data.len()).collect();
    let classes = net.classes();
    let mut loss = 0.0;
    let mut correct = 0usize;
    for chunk in idx.chunks(batch_size.max(1)) {
        let (x, labels) = data.batch(chunk)?;
        let (logits, _) = network_forward(net, &x, ForwardOptions::default())?;
        let (l, _) = cross_entropy(&logits, &labels, classes);
        loss += l * chunk.len() as f64;
        correct += labels
            .iter()
            .enumerate()
            .filter(|(b, &y)| argmax(&logits[b * classes..(b + 1) * classes]) == y)
            .count();
    }
    Ok((loss / data.len() as f64, correct as f64 / data.len() as f64))
}

fn write_record<W: Write>(log: &mut W, rec: &EpochRecord) -> Result<()> {
    let line = serde_json::to_string(rec).map_err(|e| TawqError::Data(e.to_string()))?;
    writeln!(log, "{line}")?;
    Ok(())
}

/// Train `net` in place, writing one JSON record per epoch and split to `log`.
pub fn train<W: Write>(
    net: &mut Network,
    train_set: &Dataset,
    test_set: &Dataset,
    cfg: &TrainConfig,
    log: &mut W,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TawqError::Data("training set is empty".into()));
    }
    if train_set.sample_shape != net.input_shape() || train_set.timesteps != net.timesteps {
        return Err(TawqError::Shape(format!(
            "dataset samples are {:?} over {} steps, network expects {:?} over {}",
            train_set.sample_shape,
            train_set.timesteps,
            net.input_shape(),
            net.timesteps
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed ^ 0x005e_ed0f_7a3a);
    let mut opt = OptimizerState::default();
    let classes = net.classes();
    let init_entropy = network_entropy(net)?;
    let mut records = Vec::new();
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let fwd = ForwardOptions {
        train: true,
        relaxed: false,
    };
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let lr = cfg.lr_at(epoch - 1);
        let (mut loss_sum, mut correct, mut norm_sum, mut batches) = (0.0, 0usize, 0.0, 0usize);
        for chunk in order.chunks(cfg.batch_size) {
            let (x, labels) = train_set.batch(chunk)?;
            let (logits, traces) = network_forward(net, &x, fwd)?;
            let (loss, grad) = cross_entropy(&logits, &labels, classes);
            if !loss.is_finite() {
                return Err(TawqError::NonFinite {
                    what: format!("training loss in epoch {epoch}"),
                    location: Location::default(),
                });
            }
            let mut grads = backward_pass(net, &traces, &grad)?;
            net.update_running_stats(&traces);
            let norm = clip_and_step(&mut net.params_mut(), &mut grads, cfg, &mut opt, lr)?;
            loss_sum += loss * chunk.len() as f64;
            norm_sum += norm;
            batches += 1;
            correct += labels
                .iter()
                .enumerate()
                .filter(|(b, &y)| argmax(&logits[b * classes..(b + 1) * classes]) == y)
                .count();
        }
        let entropy = network_entropy(net)?;
        let rec = EpochRecord {
            epoch,
            split: "train".into(),
            loss: loss_sum / train_set.len() as f64,
            accuracy: correct as f64 / train_set.len() as f64,
            entropy_mean: entropy,
            grad_norm: Some(norm_sum / batches as f64),
        };
        write_record(log, &rec)?;
        records.push(rec);
        if !test_set.is_empty() {
            let (loss, acc) = evaluate(net, test_set, cfg.batch_size)?;
            let rec = EpochRecord {
                epoch,
                split: "test".into(),
                loss,
                accuracy: acc,
                entropy_mean: entropy,
                grad_norm: None,
            };
            write_record(log, &rec)?;
            records.push(rec);
        }
    }
    let (test_loss, test_accuracy) = if test_set.is_empty() {
        (f64::NAN, f64::NAN)
    } else {
        evaluate(net, test_set, cfg.batch_size)?
    };
    Ok(TrainOutcome {
        records,
        init_entropy,
        final_entropy: network_entropy(net)?,
        test_loss,
        test_accuracy,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cross_entropy_uniform() {
        let (l, g) = cross_entropy(&[0.0, 0.0], &[1], 2);
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, vec![0.5, -0.5]);
    }

    #[test]
    fn argmax_first_wins_ties() {
        assert_eq!(argmax(&[1.0, 3.0, 3.0]), 1);
    }
}
