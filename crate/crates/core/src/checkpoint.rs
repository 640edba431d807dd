//! Self-describing checkpoint file, all integers little-endian.
//!
//! | field         | type |
//! |---------------|------|
//! | magic         | `b"TAWQ"` |
//! | version       | `u16` = 1 |
//! | tensor count  | `u32` |
//! | config        | `u32` length + UTF-8 TOML run configuration |
//! | metrics       | `u32` length + UTF-8 JSON summary |
//! | tensors       | see below, `tensor count` times |
//! | checksum      | SHA-256 of every preceding byte |
//!
//! Each tensor is a `u16`-prefixed UTF-8 name, a `u8` rank and that many
//! `u32` dims, a `u8` dtype tag, a `u64` payload length and the payload.
//! Tags: 0 = `f64`, 1 = 2-bit packed ternary, 2 = 4-bit packed levels,
//! 3 = `u32`. Packed payloads follow [`PackedTernaryTensor`].
//!
//! Tensor names: `meta.input_shape`, `layers.{i}.stimulus` or
//! `layers.{i}.weight`, `layers.{i}.alpha` and `layers.{i}.packed` for
//! quantized layers, `layers.{i}.{gamma,beta,mu,sigma2}` for batch norm.

use std::path::Path;

use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Result, TawqError};
use crate::layers::{Layer, Network};
use crate::runtime::{pack_levels, PackedTernaryTensor};

const MAGIC: &[u8; 4] = b"TAWQ";
const VERSION: u16 = 1;

#[derive(Debug, Clone, PartialEq)]
pub enum TensorData {
    F64(Vec<f64>),
    Packed(PackedTernaryTensor),
    U32(Vec<u32>),
}

impl TensorData {
    fn tag(&self) -> u8 {
        match self {
            TensorData::F64(_) => 0,
            TensorData::Packed(p) if p.bits == 2 => 1,
            TensorData::Packed(_) => 2,
            TensorData::U32(_) => 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: TensorData,
}

impl Tensor {
    fn f64(name: String, shape: Vec<usize>, data: Vec<f64>) -> Self {
        Self {
            name,
            shape,
            data: TensorData::F64(data),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    /// Run configuration as TOML.
    pub config_toml: String,
    /// Metrics summary as JSON.
    pub metrics_json: String,
    pub tensors: Vec<Tensor>,
}

fn ckpt_err(msg: impl Into<String>) -> TawqError {
    TawqError::Checkpoint(msg.into())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn bytes(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.buf.len() - self.pos < n {
            return Err(ckpt_err(format!("truncated while reading {what}")));
        }
        let out = &self.buf[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn u8(&mut self, what: &str) -> Result<u8> {
        Ok(self.bytes(1, what)?[0])
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.bytes(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.bytes(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.bytes(8, what)?.try_into().unwrap()))
    }

    fn string(&mut self, len: usize, what: &str) -> Result<String> {
        String::from_utf8(self.bytes(len, what)?.to_vec()).map_err(|_| ckpt_err(format!("{what} is not UTF-8")))
    }
}

fn put_len(out: &mut Vec<u8>, len: usize, what: &str) -> Result<()> {
    let v = u32::try_from(len).map_err(|_| ckpt_err(format!("{what} is too large")))?;
    out.extend_from_slice(&v.to_le_bytes());
    Ok(())
}

impl Checkpoint {
    /// Snapshot a network together with the configuration that built it.
    pub fn from_network(config: &RunConfig, metrics_json: String, net: &Network) -> Result<Self> {
        let mut tensors = vec![Tensor {
            name: "meta.input_shape".into(),
            shape: vec![net.input_shape().len()],
            data: TensorData::U32(net.input_shape().iter().map(|&d| d as u32).collect()),
        }];
        let steps = net.timesteps;
        for (i, layer) in net.layers.iter().enumerate() {
            match layer {
                Layer::Synapse(s) => {
                    let g = &s.geometry;
                    let mut wshape = vec![g.out_channels, g.in_channels];
                    if g.conv {
                        wshape.extend([g.kernel, g.kernel]);
                    }
                    tensors.push(Tensor::f64(format!("layers.{i}.{}", s.param_name()), wshape.clone(), s.param.clone()));
                    if s.mode.is_quantized() {
                        let wt = s.weights(steps, false).map_err(|e| e.in_layer(i))?;
                        let w_q = wt.quant.and_then(|q| q.w_q).expect("hard quantization records integer weights");
                        tensors.push(Tensor::f64(
                            format!("layers.{i}.alpha"),
                            vec![steps, g.out_channels],
                            wt.alpha.alpha,
                        ));
                        let mut pshape = vec![steps];
                        pshape.extend(&wshape);
                        let packed = pack_levels(&w_q.concat(), pshape.clone(), s.quant.n_level)?;
                        tensors.push(Tensor {
                            name: format!("layers.{i}.packed"),
                            shape: pshape,
                            data: TensorData::Packed(packed),
                        });
                    }
                }
                Layer::BatchNorm(bn) => {
                    let c = vec![bn.channels()];
                    tensors.push(Tensor::f64(format!("layers.{i}.gamma"), c.clone(), bn.gamma.clone()));
                    tensors.push(Tensor::f64(format!("layers.{i}.beta"), c.clone(), bn.beta.clone()));
                    tensors.push(Tensor::f64(format!("layers.{i}.mu"), c.clone(), bn.mu.clone()));
                    tensors.push(Tensor::f64(format!("layers.{i}.sigma2"), c, bn.sigma2.clone()));
                }
                _ => {}
            }
        }
        Ok(Self {
            config_toml: config.to_toml()?,
            metrics_json,
            tensors,
        })
    }

    pub fn config(&self) -> Result<RunConfig> {
        RunConfig::from_toml(&self.config_toml).map_err(|e| ckpt_err(format!("embedded config: {e}")))
    }

    pub fn tensor(&self, name: &str) -> Result<&Tensor> {
        self.tensors
            .iter()
            .find(|t| t.name == name)
            .ok_or_else(|| ckpt_err(format!("missing tensor `{name}`")))
    }

    fn f64_tensor(&self, name: &str, len: usize) -> Result<Vec<f64>> {
        match &self.tensor(name)?.data {
            TensorData::F64(v) if v.len() == len => Ok(v.clone()),
            TensorData::F64(v) => Err(ckpt_err(format!("tensor `{name}` has {} entries, expected {len}", v.len()))),
            _ => Err(ckpt_err(format!("tensor `{name}` is not f64"))),
        }
    }

    pub fn input_shape(&self) -> Result<Vec<usize>> {
        match &self.tensor("meta.input_shape")?.data {
            TensorData::U32(v) => Ok(v.iter().map(|&d| d as usize).collect()),
            _ => Err(ckpt_err("tensor `meta.input_shape` is not u32")),
        }
    }

    /// Rebuild the network and load every stored parameter.
    pub fn to_network(&self) -> Result<Network> {
        let cfg = self.config()?;
        let mut net = cfg.build_network(&self.input_shape()?)?;
        for i in 0..net.layers.len() {
            match &mut net.layers[i] {
                Layer::Synapse(s) => {
                    s.param = self.f64_tensor(&format!("layers.{i}.{}", s.param_name()), s.param.len())?;
                }
                Layer::BatchNorm(bn) => {
                    let c = bn.channels();
                    bn.gamma = self.f64_tensor(&format!("layers.{i}.gamma"), c)?;
                    bn.beta = self.f64_tensor(&format!("layers.{i}.beta"), c)?;
                    bn.mu = self.f64_tensor(&format!("layers.{i}.mu"), c)?;
                    bn.sigma2 = self.f64_tensor(&format!("layers.{i}.sigma2"), c)?;
                }
                _ => {}
            }
        }
        Ok(net)
    }

    /// Stored packed weights and scaling of quantized layer `i`, checked
    /// against the ones implied by its stimulus.
    pub fn folding_inputs(&self, net: &Network, i: usize) -> Result<(PackedTernaryTensor, Vec<f64>)> {
        let Layer::Synapse(s) = &net.layers[i] else {
            return Err(ckpt_err(format!("layer {i} is not synaptic")));
        };
        let packed = match &self.tensor(&format!("layers.{i}.packed"))?.data {
            TensorData::Packed(p) => p.clone(),
            _ => return Err(ckpt_err(format!("tensor `layers.{i}.packed` is not packed"))),
        };
        let alpha = self.f64_tensor(&format!("layers.{i}.alpha"), net.timesteps * s.geometry.out_channels)?;
        let wt = s.weights(net.timesteps, false).map_err(|e| e.in_layer(i))?;
        let w_q = wt.quant.and_then(|q| q.w_q).unwrap_or_default();
        if packed.unpack()? != w_q.concat() || alpha != wt.alpha.alpha {
            return Err(ckpt_err(format!("layer {i}: stored packed weights disagree with the stimulus")));
        }
        Ok((packed, alpha))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = MAGIC.to_vec();
        out.extend_from_slice(&VERSION.to_le_bytes());
        put_len(&mut out, self.tensors.len(), "tensor count")?;
        put_len(&mut out, self.config_toml.len(), "config")?;
        out.extend_from_slice(self.config_toml.as_bytes());
        put_len(&mut out, self.metrics_json.len(), "metrics")?;
        out.extend_from_slice(self.metrics_json.as_bytes());
        for t in &self.tensors {
            let name_len = u16::try_from(t.name.len()).map_err(|_| ckpt_err("tensor name too long"))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(t.name.as_bytes());
            out.push(t.shape.len() as u8);
            for &d in &t.shape {
                put_len(&mut out, d, "tensor dim")?;
            }
            out.push(t.data.tag());
            let payload: Vec<u8> = match &t.data {
                TensorData::F64(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
                TensorData::Packed(p) => {
                    if p.shape != t.shape {
                        return Err(ckpt_err(format!("tensor `{}`: packed shape differs from header", t.name)));
                    }
                    p.codes.clone()
                }
                TensorData::U32(v) => v.iter().flat_map(|x| x.to_le_bytes()).collect(),
            };
            out.extend_from_slice(&(payload.len() as u64).to_le_bytes());
            out.extend_from_slice(&payload);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(digest.as_slice());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < MAGIC.len() + 32 || &bytes[..4] != MAGIC {
            return Err(ckpt_err("not a checkpoint file"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(TawqError::Checksum);
        }
        let mut r = Reader { buf: body, pos: 4 };
        let version = r.u16("version")?;
        if version != VERSION {
            return Err(ckpt_err(format!("unsupported version {version}")));
        }
        let count = r.u32("tensor count")? as usize;
        let len = r.u32("config length")? as usize;
        let config_toml = r.string(len, "config")?;
        let len = r.u32("metrics length")? as usize;
        let metrics_json = r.string(len, "metrics")?;
        let mut tensors = Vec::with_capacity(count.min(1024));
        for _ in 0..count {
            let len = r.u16("tensor name length")? as usize;
            let name = r.string(len, "tensor name")?;
            let rank = r.u8("tensor rank")? as usize;
            let shape = (0..rank)
                .map(|_| r.u32("tensor dims").map(|d| d as usize))
                .collect::<Result<Vec<_>>>()?;
            let tag = r.u8("dtype tag")?;
            let len = usize::try_from(r.u64("payload length")?).map_err(|_| ckpt_err("payload too large"))?;
            let payload = r.bytes(len, "tensor payload")?;
            let elems: usize = shape.iter().product();
            let data = match tag {
                0 | 3 => {
                    let width = if tag == 0 { 8 } else { 4 };
                    if len != elems * width {
                        return Err(ckpt_err(format!("tensor `{name}`: payload does not match its shape")));
                    }
                    if tag == 0 {
                        TensorData::F64(
                            payload.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
                        )
                    } else {
                        TensorData::U32(
                            payload.chunks_exact(4).map(|c| u32::from_le_bytes(c.try_into().unwrap())).collect(),
                        )
                    }
                }
                1 | 2 => {
                    let p = PackedTernaryTensor {
                        shape: shape.clone(),
                        bits: if tag == 1 { 2 } else { 4 },
                        codes: payload.to_vec(),
                    };
                    p.unpack().map_err(|e| ckpt_err(format!("tensor `{name}`: {e}")))?;
                    TensorData::Packed(p)
                }
                t => return Err(ckpt_err(format!("tensor `{name}`: unknown dtype tag {t}"))),
            };
            tensors.push(Tensor { name, shape, data });
        }
        if r.pos != body.len() {
            return Err(ckpt_err("trailing bytes before the checksum"));
        }
        Ok(Self {
            config_toml,
            metrics_json,
            tensors,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
