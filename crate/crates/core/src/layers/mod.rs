//! Spiking network layers and the multi-timestep forward pass.
//!
//! Activations are evaluated layer by layer over the whole `(T, B, ...)`
//! block. Batch-norm statistics need every timestep of the preceding layer,
//! and LIF membranes carry state across timesteps within one layer.

pub mod bn;
pub mod lif;
pub mod pool;
pub mod synapse;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, TawqError};
use crate::quant::QuantConfig;

pub use bn::{BnCache, BnParams};
pub use lif::{lif_step, LifConfig};
pub use pool::{Pool, PoolMode};
pub use synapse::{qconv_forward, Geometry, QuantTrace, SynapseMode, SynapticLayer, WeightTrace};

/// A `(T, B, shape...)` block of activations, timestep-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Activation {
    pub timesteps: usize,
    pub batch: usize,
    /// Per-sample shape, `(C, H, W)` or `(F)`.
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

impl Activation {
    pub fn new(timesteps: usize, batch: usize, shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        let len: usize = shape.iter().product();
        if data.len() != timesteps * batch * len {
            return Err(TawqError::Shape(format!(
                "activation data has {} entries, expected {}x{}x{}",
                data.len(),
                timesteps,
                batch,
                len
            )));
        }
        Ok(Self {
            timesteps,
            batch,
            shape,
            data,
        })
    }

    pub fn sample_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn slice(&self, t: usize, b: usize) -> &[f64] {
        let len = self.sample_len();
        let s = t * self.batch + b;
        &self.data[s * len..(s + 1) * len]
    }

    /// Build a block from per-sample `(T, sample_len)` inputs.
    pub fn from_samples<'a, I>(timesteps: usize, shape: Vec<usize>, samples: I) -> Result<Self>
    where
        I: IntoIterator<Item = &'a [f64]>,
    {
        let samples: Vec<&[f64]> = samples.into_iter().collect();
        let len: usize = shape.iter().product();
        let batch = samples.len();
        let mut data = vec![0.0; timesteps * batch * len];
        for (b, s) in samples.iter().enumerate() {
            if s.len() != timesteps * len {
                return Err(TawqError::Shape(format!(
                    "sample {b} has {} entries, expected {}",
                    s.len(),
                    timesteps * len
                )));
            }
            for t in 0..timesteps {
                let dst = (t * batch + b) * len;
                data[dst..dst + len].copy_from_slice(&s[t * len..(t + 1) * len]);
            }
        }
        Self::new(timesteps, batch, shape, data)
    }

    pub fn is_binary(&self) -> bool {
        self.data.iter().all(|&v| v == 0.0 || v == 1.0)
    }
}

/// Declarative layer description as written in a run configuration.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum LayerSpec {
    Qconv {
        out_channels: usize,
        kernel: usize,
        #[serde(default = "default_stride")]
        stride: usize,
        #[serde(default)]
        padding: usize,
        /// Overrides the network-wide quantization choice for this layer.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quantize: Option<bool>,
    },
    Qlinear {
        out_features: usize,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        quantize: Option<bool>,
    },
    Bn,
    Lif,
    Pool {
        mode: PoolMode,
        kernel: usize,
    },
    Flatten,
}

fn default_stride() -> usize {
    1
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Precision {
    FullPrecision,
    #[default]
    Tawq,
}

/// Options that decide how layer specs become concrete layers.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BuildOptions {
    pub precision: Precision,
    /// Quantize the first synaptic layer as well.
    pub quantize_first: bool,
    /// Replace the temporal recurrence by memoryless quantization.
    pub ablate_temporal: bool,
    pub quant: QuantConfig,
    pub lif: LifConfig,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Layer {
    Synapse(SynapticLayer),
    BatchNorm(BnParams),
    Lif(LifConfig),
    Pool(Pool),
    Flatten,
}

impl Layer {
    pub fn kind(&self) -> &'static str {
        match self {
            Layer::Synapse(s) if s.geometry.conv => "qconv",
            Layer::Synapse(_) => "qlinear",
            Layer::BatchNorm(_) => "bn",
            Layer::Lif(_) => "lif",
            Layer::Pool(_) => "pool",
            Layer::Flatten => "flatten",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Network {
    pub timesteps: usize,
    pub layers: Vec<Layer>,
    /// `layers.len() + 1` per-sample shapes; `shapes[0]` is the input.
    pub shapes: Vec<Vec<usize>>,
}

impl Network {
    pub fn build<R: Rng>(
        input_shape: &[usize],
        timesteps: usize,
        specs: &[LayerSpec],
        opts: &BuildOptions,
        rng: &mut R,
    ) -> Result<Self> {
        opts.quant.validate()?;
        opts.lif.validate()?;
        if timesteps == 0 {
            return Err(TawqError::Param("timesteps must be at least 1".into()));
        }
        let quant = QuantConfig {
            timesteps,
            ..opts.quant
        };
        let mut shapes = vec![input_shape.to_vec()];
        let mut layers = Vec::with_capacity(specs.len());
        let mut first_synapse = true;
        for (idx, spec) in specs.iter().enumerate() {
            let shape = shapes.last().unwrap().clone();
            let mode = |explicit: Option<bool>, first: bool| {
                let quantize = explicit.unwrap_or(!first || opts.quantize_first);
                match (opts.precision, quantize) {
                    (Precision::FullPrecision, _) | (_, false) => SynapseMode::FullPrecision,
                    _ if opts.ablate_temporal => SynapseMode::Memoryless,
                    _ => SynapseMode::Tawq,
                }
            };
            let layer = match *spec {
                LayerSpec::Qlinear { out_features, quantize } => {
                    let [in_features] = shape[..] else {
                        return Err(TawqError::Shape(format!(
                            "layer {idx}: qlinear needs a flat input, got {shape:?} (add a flatten layer)"
                        )));
                    };
                    let g = Geometry::linear(in_features, out_features);
                    let m = mode(quantize, first_synapse);
                    first_synapse = false;
                    Layer::Synapse(SynapticLayer::init(g, m, quant, rng))
                }
                LayerSpec::Qconv {
                    out_channels,
                    kernel,
                    stride,
                    padding,
                    quantize,
                } => {
                    let [c, h, w] = shape[..] else {
                        return Err(TawqError::Shape(format!("layer {idx}: qconv needs a (C, H, W) input, got {shape:?}")));
                    };
                    let g = Geometry::conv(c, out_channels, kernel, stride, padding, h, w).map_err(|e| e.in_layer(idx))?;
                    let m = mode(quantize, first_synapse);
                    first_synapse = false;
                    Layer::Synapse(SynapticLayer::init(g, m, quant, rng))
                }
                LayerSpec::Bn => Layer::BatchNorm(BnParams::new(shape[0])),
                LayerSpec::Lif => Layer::Lif(opts.lif),
                LayerSpec::Pool { mode, kernel } => Layer::Pool(Pool::new(mode, kernel, &shape).map_err(|e| e.in_layer(idx))?),
                LayerSpec::Flatten => Layer::Flatten,
            };
            let out = match &layer {
                Layer::Synapse(s) => s.geometry.out_shape(),
                Layer::Pool(p) => p.out_shape(),
                Layer::Flatten => vec![shape.iter().product()],
                _ => shape,
            };
            layers.push(layer);
            shapes.push(out);
        }
        let net = Self {
            timesteps,
            layers,
            shapes,
        };
        net.check_topology()?;
        Ok(net)
    }

    fn check_topology(&self) -> Result<()> {
        let Some(last) = self.layers.last() else {
            return Err(TawqError::Shape("network has no layers".into()));
        };
        if !matches!(last, Layer::Synapse(_)) {
            return Err(TawqError::Shape("the last layer must be a qlinear or qconv output head".into()));
        }
        let n = self.layers.len();
        for (i, layer) in self.layers.iter().enumerate().take(n - 1) {
            if let Layer::Synapse(_) = layer {
                let spiking = self.layers[i + 1..]
                    .iter()
                    .find(|l| !matches!(l, Layer::BatchNorm(_) | Layer::Pool(_)))
                    .is_some_and(|l| matches!(l, Layer::Lif(_)));
                if !spiking {
                    return Err(TawqError::Shape(format!(
                        "layer {i}: a hidden synaptic layer must feed a lif layer (optionally through bn/pool)"
                    )));
                }
            }
            if let Layer::BatchNorm(bn) = layer {
                if bn.channels() != self.shapes[i][0] {
                    return Err(TawqError::Shape(format!("layer {i}: batch-norm channel mismatch")));
                }
            }
        }
        Ok(())
    }

    pub fn input_shape(&self) -> &[usize] {
        &self.shapes[0]
    }

    pub fn classes(&self) -> usize {
        self.shapes.last().map(|s| s.iter().product()).unwrap_or(0)
    }

    pub fn synapses(&self) -> impl Iterator<Item = (usize, &SynapticLayer)> {
        self.layers.iter().enumerate().filter_map(|(i, l)| match l {
            Layer::Synapse(s) => Some((i, s)),
            _ => None,
        })
    }

    /// Trainable tensors in a fixed order with their parameter paths.
    pub fn params_mut(&mut self) -> Vec<(String, &mut Vec<f64>)> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter_mut().enumerate() {
            match layer {
                Layer::Synapse(s) => {
                    let name = format!("layers.{i}.{}", s.param_name());
                    out.push((name, &mut s.param));
                }
                Layer::BatchNorm(bn) => {
                    out.push((format!("layers.{i}.gamma"), &mut bn.gamma));
                    out.push((format!("layers.{i}.beta"), &mut bn.beta));
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_names(&self) -> Vec<String> {
        let mut out = Vec::new();
        for (i, layer) in self.layers.iter().enumerate() {
            match layer {
                Layer::Synapse(s) => out.push(format!("layers.{i}.{}", s.param_name())),
                Layer::BatchNorm(_) => {
                    out.push(format!("layers.{i}.gamma"));
                    out.push(format!("layers.{i}.beta"));
                }
                _ => {}
            }
        }
        out
    }

    pub fn param_values(&self) -> Vec<&[f64]> {
        let mut out: Vec<&[f64]> = Vec::new();
        for layer in &self.layers {
            match layer {
                Layer::Synapse(s) => out.push(&s.param),
                Layer::BatchNorm(bn) => {
                    out.push(&bn.gamma);
                    out.push(&bn.beta);
                }
                _ => {}
            }
        }
        out
    }

    /// Apply running-statistic updates recorded in a training-mode trace.
    pub fn update_running_stats(&mut self, traces: &Traces) {
        for (layer, trace) in self.layers.iter_mut().zip(&traces.layers) {
            if let (Layer::BatchNorm(bn), LayerTrace::BatchNorm(Some(cache))) = (layer, trace) {
                bn.update_running(&cache.batch_mean, &cache.batch_var_unbiased);
            }
        }
    }

    /// Per-timestep quantized weights of every quantized synaptic layer.
    pub fn quantized_weights(&self) -> Result<Vec<(usize, Vec<Vec<i32>>)>> {
        let mut out = Vec::new();
        for (i, s) in self.synapses() {
            if s.mode.is_quantized() {
                let wt = s.weights(self.timesteps, false).map_err(|e| e.in_layer(i))?;
                let w_q = wt.quant.and_then(|q| q.w_q).ok_or_else(|| TawqError::State(format!("layer {i} weights")))?;
                out.push((i, w_q));
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ForwardOptions {
    /// Batch statistics in batch-norm layers.
    pub train: bool,
    /// Replace every hard step by its surrogate sigmoid.
    pub relaxed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LayerTrace {
    Synapse {
        weights: WeightTrace,
        /// Output before per-channel scaling.
        pre_alpha: Vec<f64>,
    },
    /// `None` when running statistics were used.
    BatchNorm(Option<BnCache>),
    Lif {
        /// Charged membrane potential before firing.
        charge: Vec<f64>,
        spikes: Vec<f64>,
    },
    Pool {
        picks: Vec<usize>,
    },
    Flatten,
}

/// Everything a forward pass retains for backpropagation and analysis.
#[derive(Debug, Clone, PartialEq)]
pub struct Traces {
    /// `inputs[i]` is the input block of layer `i`; the last entry is the
    /// output of the head.
    pub inputs: Vec<Activation>,
    pub layers: Vec<LayerTrace>,
    pub options: ForwardOptions,
}

impl Traces {
    pub fn output(&self) -> &Activation {
        self.inputs.last().expect("traces always hold the input")
    }
}

/// Evaluate the network over all timesteps.
///
/// Returns logits `(B, classes)`, the mean over timesteps of the head's
/// output, together with the traces.
pub fn network_forward(net: &Network, x: &Activation, opts: ForwardOptions) -> Result<(Vec<f64>, Traces)> {
    if x.timesteps != net.timesteps {
        return Err(TawqError::Shape(format!(
            "input has {} timesteps, network expects {}",
            x.timesteps, net.timesteps
        )));
    }
    if x.shape != net.shapes[0] {
        return Err(TawqError::Shape(format!(
            "input shape {:?} does not match network input {:?}",
            x.shape, net.shapes[0]
        )));
    }
    let steps = net.timesteps;
    let mut inputs = vec![x.clone()];
    let mut traces = Vec::with_capacity(net.layers.len());
    for (idx, layer) in net.layers.iter().enumerate() {
        let cur = inputs.last().unwrap();
        let (data, trace) = match layer {
            Layer::Synapse(s) => {
                let wt = s.weights(steps, opts.relaxed).map_err(|e| e.in_layer(idx))?;
                let (y, z) = s.forward(&cur.data, steps, &wt);
                (
                    y,
                    LayerTrace::Synapse {
                        weights: wt,
                        pre_alpha: z,
                    },
                )
            }
            Layer::BatchNorm(bn) => {
                let spatial: usize = cur.shape[1..].iter().product();
                if opts.train {
                    let (y, cache) = bn::bn_forward_train(bn, &cur.data, spatial);
                    (y, LayerTrace::BatchNorm(Some(cache)))
                } else {
                    (bn::bn_forward_eval(bn, &cur.data, spatial), LayerTrace::BatchNorm(None))
                }
            }
            Layer::Lif(cfg) => {
                let (charge, spikes) = lif::lif_forward(&cur.data, steps, cfg, opts.relaxed);
                (spikes.clone(), LayerTrace::Lif { charge, spikes })
            }
            Layer::Pool(p) => {
                let (y, picks) = p.forward(&cur.data);
                (y, LayerTrace::Pool { picks })
            }
            Layer::Flatten => (cur.data.clone(), LayerTrace::Flatten),
        };
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let sample_len: usize = net.shapes[idx + 1].iter().product();
            let t = pos / (sample_len * cur.batch);
            return Err(TawqError::non_finite_at_step("activation", t).in_layer(idx));
        }
        let next = Activation::new(steps, cur.batch, net.shapes[idx + 1].clone(), data)?;
        inputs.push(next);
        traces.push(trace);
    }
    let out = inputs.last().unwrap();
    let classes = out.sample_len();
    let mut logits = vec![0.0; out.batch * classes];
    for t in 0..steps {
        for b in 0..out.batch {
            for (k, v) in out.slice(t, b).iter().enumerate() {
                logits[b * classes + k] += v;
            }
        }
    }
    logits.iter_mut().for_each(|v| *v /= steps as f64);
    Ok((
        logits,
        Traces {
            inputs,
            layers: traces,
            options: opts,
        },
    ))
}
