//! Deployment-style inference over packed integer weights.

mod fold;
mod pack;

use rayon::prelude::*;

use crate::error::{Result, TawqError};
use crate::layers::{bn, lif, Activation, BnParams, Geometry, Layer, LayerTrace, LifConfig, Network, Pool};
use crate::layers::{network_forward, ForwardOptions};
use crate::quant::ScalingFactor;

pub use fold::{fold_parameters, FoldedNeuronParams};
pub use pack::{ac_only_matmul, pack_levels, pack_ternary, PackedTernaryTensor};

/// Synaptic accumulation `W ⊗ X` for one timestep, before any scaling.
#[derive(Debug, Clone, PartialEq)]
pub enum Kernel {
    /// Integer weights; binary inputs take the accumulate-only path.
    Packed { packed: PackedTernaryTensor, geometry: Geometry },
    /// Real weights, one copy per timestep.
    Float { weights: Vec<Vec<f64>>, geometry: Geometry },
}

impl Kernel {
    pub fn geometry(&self) -> &Geometry {
        match self {
            Kernel::Packed { geometry, .. } | Kernel::Float { geometry, .. } => geometry,
        }
    }

    /// `(C_o, positions)` accumulation of one sample at step `t`.
    pub fn accumulate(&self, x: &[f64], t: usize) -> Result<Vec<f64>> {
        let g = self.geometry();
        let cols = g.im2col(x);
        match self {
            Kernel::Packed { packed, .. } => {
                if cols.iter().all(|&v| v == 0.0 || v == 1.0) {
                    let spikes: Vec<u8> = cols.iter().map(|&v| v as u8).collect();
                    Ok(ac_only_matmul(packed, t, &spikes, g.positions())?
                        .into_iter()
                        .map(|v| v as f64)
                        .collect())
                } else {
                    let step = packed.step_len();
                    let w = (t * step..(t + 1) * step)
                        .map(|k| packed.get(k).map(f64::from))
                        .collect::<Result<Vec<_>>>()?;
                    Ok(crate::layers::synapse::weight_product(&w, &cols, g))
                }
            }
            Kernel::Float { weights, .. } => Ok(crate::layers::synapse::weight_product(&weights[t], &cols, g)),
        }
    }
}

/// LIF layer index and its `(T, neurons)` membrane potentials.
type Membrane = (usize, Vec<f64>);

#[derive(Debug, Clone, PartialEq)]
pub enum Stage {
    /// Synapse, optional batch norm and LIF collapsed into one charging step.
    Folded {
        kernel: Kernel,
        params: FoldedNeuronParams,
        /// Index of the LIF layer in the source network.
        lif_layer: usize,
    },
    /// Synapse followed by per-channel `α[t]` scaling.
    Scaled { kernel: Kernel, alpha: ScalingFactor },
    BatchNorm(BnParams),
    Lif { cfg: LifConfig, layer: usize },
    Pool(Pool),
    Flatten,
}

/// Logits plus the charged membrane potential of every LIF layer.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceOutput {
    /// `(B, classes)`.
    pub logits: Vec<f64>,
    /// `(layer index, (T, B, neurons))` per LIF layer.
    pub membranes: Vec<(usize, Vec<f64>)>,
}

impl InferenceOutput {
    pub fn predictions(&self, classes: usize) -> Vec<usize> {
        self.logits.chunks(classes).map(crate::train::argmax).collect()
    }
}

/// Inference-ready network with weights quantized, packed and folded.
#[derive(Debug, Clone, PartialEq)]
pub struct InferenceModel {
    pub timesteps: usize,
    pub input_shape: Vec<usize>,
    pub classes: usize,
    pub stages: Vec<Stage>,
}

fn kernel_for(net: &Network, idx: usize) -> Result<(Kernel, ScalingFactor)> {
    let Layer::Synapse(s) = &net.layers[idx] else {
        unreachable!("called on synaptic layers only")
    };
    let g = s.geometry;
    let wt = s.weights(net.timesteps, false).map_err(|e| e.in_layer(idx))?;
    let kernel = match wt.quant.as_ref().and_then(|q| q.w_q.as_ref()) {
        Some(w_q) => {
            let flat: Vec<i32> = w_q.concat();
            let mut shape = vec![net.timesteps, g.out_channels, g.in_channels];
            if g.conv {
                shape.extend([g.kernel, g.kernel]);
            }
            Kernel::Packed {
                packed: pack_levels(&flat, shape, s.quant.n_level).map_err(|e| e.in_layer(idx))?,
                geometry: g,
            }
        }
        None => Kernel::Float {
            weights: wt.weights,
            geometry: g,
        },
    };
    Ok((kernel, wt.alpha))
}

impl InferenceModel {
    /// Fold every `synapse → [batch norm] → LIF` run into a single stage.
    pub fn from_network(net: &Network) -> Result<Self> {
        let mut stages = Vec::new();
        let mut i = 0;
        while i < net.layers.len() {
            match &net.layers[i] {
                Layer::Synapse(_) => {
                    let (kernel, alpha) = kernel_for(net, i)?;
                    let (bn, lif_at) = match (net.layers.get(i + 1), net.layers.get(i + 2)) {
                        (Some(Layer::BatchNorm(bn)), Some(Layer::Lif(_))) => (Some(bn), Some(i + 2)),
                        (Some(Layer::Lif(_)), _) => (None, Some(i + 1)),
                        _ => (None, None),
                    };
                    match lif_at {
                        Some(l) => {
                            let Layer::Lif(cfg) = &net.layers[l] else { unreachable!() };
                            let params = fold_parameters(&alpha, bn, cfg).map_err(|e| e.in_layer(i))?;
                            stages.push(Stage::Folded {
                                kernel,
                                params,
                                lif_layer: l,
                            });
                            i = l + 1;
                        }
                        None => {
                            stages.push(Stage::Scaled { kernel, alpha });
                            i += 1;
                        }
                    }
                }
                Layer::BatchNorm(bn) => {
                    stages.push(Stage::BatchNorm(bn.clone()));
                    i += 1;
                }
                Layer::Lif(cfg) => {
                    stages.push(Stage::Lif { cfg: *cfg, layer: i });
                    i += 1;
                }
                Layer::Pool(p) => {
                    stages.push(Stage::Pool(*p));
                    i += 1;
                }
                Layer::Flatten => {
                    stages.push(Stage::Flatten);
                    i += 1;
                }
            }
        }
        Ok(Self {
            timesteps: net.timesteps,
            input_shape: net.input_shape().to_vec(),
            classes: net.classes(),
            stages,
        })
    }

    /// One sample, `(T, len)` in; logits and per-LIF `(T, neurons)` membranes out.
    fn run_sample(&self, x: &[f64]) -> Result<(Vec<f64>, Vec<Membrane>)> {
        let steps = self.timesteps;
        let mut cur: Vec<Vec<f64>> = x.chunks(x.len() / steps).map(<[f64]>::to_vec).collect();
        let mut membranes = Vec::new();
        for stage in &self.stages {
            cur = match stage {
                Stage::Folded { kernel, params, lif_layer } => {
                    let positions = kernel.geometry().positions();
                    let mut u: Option<Vec<f64>> = None;
                    let mut trace = Vec::new();
                    let mut out = Vec::with_capacity(steps);
                    for (t, xt) in cur.iter().enumerate() {
                        let z = kernel.accumulate(xt, t)?;
                        let u_prev = u.get_or_insert_with(|| vec![params.lif.v_reset; z.len()]);
                        let rho = params.rho_at(t);
                        let current: Vec<f64> = z
                            .iter()
                            .enumerate()
                            .map(|(k, v)| rho[k / positions] * v + params.delta[k / positions])
                            .collect();
                        let (spikes, next) = lif::lif_step(u_prev, &current, &params.lif)?;
                        trace.extend(u_prev.iter().zip(&current).map(|(&u, &c)| params.lif.decay() * u + c));
                        *u_prev = next;
                        out.push(spikes);
                    }
                    membranes.push((*lif_layer, trace));
                    out
                }
                Stage::Scaled { kernel, alpha } => {
                    let positions = kernel.geometry().positions();
                    cur.iter()
                        .enumerate()
                        .map(|(t, xt)| {
                            let a = alpha.at(t);
                            Ok(kernel
                                .accumulate(xt, t)?
                                .iter()
                                .enumerate()
                                .map(|(k, v)| a[k / positions] * v)
                                .collect())
                        })
                        .collect::<Result<_>>()?
                }
                Stage::BatchNorm(p) => {
                    let spatial = cur[0].len() / p.channels();
                    cur.iter().map(|xt| bn::bn_forward_eval(p, xt, spatial)).collect()
                }
                Stage::Lif { cfg, layer } => {
                    let flat = cur.concat();
                    let (charge, spikes) = lif::lif_forward(&flat, steps, cfg, false);
                    membranes.push((*layer, charge));
                    spikes.chunks(flat.len() / steps).map(<[f64]>::to_vec).collect()
                }
                Stage::Pool(p) => cur.iter().map(|xt| p.forward(xt).0).collect(),
                Stage::Flatten => cur,
            };
        }
        let classes = self.classes;
        let mut logits = vec![0.0; classes];
        for y in &cur {
            logits.iter_mut().zip(y).for_each(|(l, v)| *l += v / steps as f64);
        }
        Ok((logits, membranes))
    }

    /// Inference with α and batch norm folded into the LIF charging step.
    pub fn folded_inference(&self, x: &Activation) -> Result<InferenceOutput> {
        if x.timesteps != self.timesteps || x.shape != self.input_shape {
            return Err(TawqError::Shape(format!(
                "input is {:?} over {} steps, model expects {:?} over {}",
                x.shape, x.timesteps, self.input_shape, self.timesteps
            )));
        }
        let len = x.sample_len();
        let per_sample = (0..x.batch)
            .into_par_iter()
            .map(|b| {
                let sample: Vec<f64> = (0..x.timesteps).flat_map(|t| x.slice(t, b).to_vec()).collect();
                debug_assert_eq!(sample.len(), x.timesteps * len);
                self.run_sample(&sample)
            })
            .collect::<Result<Vec<_>>>()?;
        let batch = x.batch;
        let steps = self.timesteps;
        let logits = per_sample.iter().flat_map(|(l, _)| l.clone()).collect();
        let mut membranes: Vec<(usize, Vec<f64>)> = Vec::new();
        if let Some((_, first)) = per_sample.first() {
            for (k, (layer, trace)) in first.iter().enumerate() {
                let n = trace.len() / steps;
                let mut data = vec![0.0; steps * batch * n];
                for (b, (_, m)) in per_sample.iter().enumerate() {
                    for t in 0..steps {
                        data[(t * batch + b) * n..(t * batch + b + 1) * n]
                            .copy_from_slice(&m[k].1[t * n..(t + 1) * n]);
                    }
                }
                membranes.push((*layer, data));
            }
        }
        Ok(InferenceOutput { logits, membranes })
    }
}

/// Reference path: α scaling, batch norm with running statistics, then LIF.
pub fn unfolded_inference(net: &Network, x: &Activation) -> Result<InferenceOutput> {
    let (logits, traces) = network_forward(net, x, ForwardOptions::default())?;
    let membranes = traces
        .layers
        .iter()
        .enumerate()
        .filter_map(|(i, tr)| match tr {
            LayerTrace::Lif { charge, .. } => Some((i, charge.clone())),
            _ => None,
        })
        .collect();
    Ok(InferenceOutput { logits, membranes })
}

/// Largest absolute difference between two membrane trace sets.
pub fn max_membrane_deviation(a: &InferenceOutput, b: &InferenceOutput) -> Result<f64> {
    if a.membranes.len() != b.membranes.len() {
        return Err(TawqError::Shape("membrane traces cover different layers".into()));
    }
    let mut worst = 0.0f64;
    for ((la, ma), (lb, mb)) in a.membranes.iter().zip(&b.membranes) {
        if la != lb || ma.len() != mb.len() {
            return Err(TawqError::Shape(format!("membrane traces of layers {la} and {lb} differ in shape")));
        }
        for (x, y) in ma.iter().zip(mb) {
            worst = worst.max((x - y).abs());
        }
    }
    Ok(worst)
}

impl InferenceModel {
    /// Rebuild the network stored in a checkpoint and fold it, requiring the
    /// stored packed weights and scaling of every quantized layer.
    pub fn from_checkpoint(ckpt: &crate::checkpoint::Checkpoint) -> Result<(Network, Self)> {
        let net = ckpt.to_network()?;
        let quantized: Vec<usize> = net.synapses().filter(|(_, s)| s.mode.is_quantized()).map(|(i, _)| i).collect();
        for i in quantized {
            ckpt.folding_inputs(&net, i)?;
        }
        let model = Self::from_network(&net)?;
        Ok((net, model))
    }
}
