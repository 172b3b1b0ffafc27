//! Versioned binary model checkpoints.
//!
//! Layout (little-endian): magic `AGP1`, format version `u16`, kind string,
//! optimizer step counter `u64`, string metadata pairs, then each network as
//! its input shape and a layer manifest. Each layer is a tag byte, its
//! hyperparameters, and its parameter arrays as length-prefixed `f32` runs.
//! Strings are `u16` length-prefixed UTF-8.

use std::path::Path;

use super::layers::{BatchNorm, Conv2d, Dense, Layer, Param};
use super::network::Network;
use super::tensor::Tensor;
use crate::binio::{Reader, Writer};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 4] = b"AGP1";
pub const VERSION: u16 = 1;

const TAG_DENSE: u8 = 1;
const TAG_CONV: u8 = 2;
const TAG_RELU: u8 = 3;
const TAG_POOL: u8 = 4;
const TAG_BN: u8 = 5;
const TAG_SOFTMAX: u8 = 6;

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    /// What the networks are: `classifier`, `dqn`, `ppo`, ...
    pub kind: String,
    pub step: u64,
    pub meta: Vec<(String, String)>,
    pub networks: Vec<Network>,
}

impl Checkpoint {
    pub fn new(kind: impl Into<String>, step: u64, networks: Vec<Network>) -> Self {
        Checkpoint {
            kind: kind.into(),
            step,
            meta: Vec::new(),
            networks,
        }
    }

    pub fn with_meta(mut self, key: &str, value: impl ToString) -> Self {
        self.meta.push((key.to_string(), value.to_string()));
        self
    }

    pub fn meta(&self, key: &str) -> Option<&str> {
        self.meta
            .iter()
            .find(|(k, _)| k == key)
            .map(|(_, v)| v.as_str())
    }

    pub fn meta_parse<T: std::str::FromStr>(&self, key: &str) -> Result<T> {
        self.meta(key)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::Parse {
                offset: 0,
                msg: format!("checkpoint metadata `{key}` missing or malformed"),
            })
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut w = Writer::new();
        w.bytes(MAGIC);
        w.u16(VERSION);
        w.str(&self.kind);
        w.u64(self.step);
        w.u32(self.meta.len() as u32);
        for (k, v) in &self.meta {
            w.str(k);
            w.str(v);
        }
        w.u32(self.networks.len() as u32);
        for net in &self.networks {
            write_network(&mut w, net);
        }
        w.finish()
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.take(4)? != MAGIC {
            return Err(Error::Parse {
                offset: 0,
                msg: "bad magic, expected AGP1".into(),
            });
        }
        let version = r.u16()?;
        if version != VERSION {
            return Err(r.err(format!("unsupported checkpoint version {version}")));
        }
        let kind = r.str()?;
        let step = r.u64()?;
        let n_meta = r.u32()?;
        let mut meta = Vec::new();
        for _ in 0..n_meta {
            meta.push((r.str()?, r.str()?));
        }
        let n_nets = r.u32()?;
        let mut networks = Vec::new();
        for _ in 0..n_nets {
            networks.push(read_network(&mut r)?);
        }
        if !r.is_empty() {
            return Err(r.err("trailing bytes after last network"));
        }
        Ok(Checkpoint {
            kind,
            step,
            meta,
            networks,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Checkpoint::from_bytes(&std::fs::read(path)?)
    }
}

fn write_network(w: &mut Writer, net: &Network) {
    w.u8(net.input_shape().len() as u8);
    for &d in net.input_shape() {
        w.u32(d as u32);
    }
    w.u32(net.layers().len() as u32);
    for layer in net.layers() {
        match layer {
            Layer::Dense(d) => {
                w.u8(TAG_DENSE);
                w.u32(d.inputs as u32);
                w.u32(d.outputs as u32);
                w.f32s(d.weight.value.data());
                w.f32s(d.bias.value.data());
            }
            Layer::Conv2d(c) => {
                w.u8(TAG_CONV);
                for v in [c.in_channels, c.out_channels, c.kernel, c.padding] {
                    w.u32(v as u32);
                }
                w.f32s(c.weight.value.data());
                w.f32s(c.bias.value.data());
            }
            Layer::Relu => w.u8(TAG_RELU),
            Layer::MaxPool2d { size } => {
                w.u8(TAG_POOL);
                w.u32(*size as u32);
            }
            Layer::BatchNorm(b) => {
                w.u8(TAG_BN);
                w.u32(b.channels as u32);
                w.f32(b.momentum);
                w.f32(b.eps);
                w.f32s(b.gamma.value.data());
                w.f32s(b.beta.value.data());
                w.f32s(&b.running_mean);
                w.f32s(&b.running_var);
            }
            Layer::Softmax => w.u8(TAG_SOFTMAX),
        }
    }
}

fn read_param(r: &mut Reader, shape: &[usize]) -> Result<Param> {
    let at = r.pos();
    let data = r.f32s()?;
    let t = Tensor::new(shape.to_vec(), data).map_err(|e| Error::Parse {
        offset: at as u64,
        msg: e.to_string(),
    })?;
    Ok(Param::new(t))
}

fn read_vec(r: &mut Reader, len: usize) -> Result<Vec<f32>> {
    let v = r.f32s()?;
    if v.len() != len {
        return Err(r.err(format!("expected {len} values, found {}", v.len())));
    }
    Ok(v)
}

fn read_network(r: &mut Reader) -> Result<Network> {
    let rank = r.u8()? as usize;
    let input_shape = (0..rank)
        .map(|_| r.u32().map(|d| d as usize))
        .collect::<Result<Vec<_>>>()?;
    let n_layers = r.u32()?;
    let mut layers = Vec::new();
    for _ in 0..n_layers {
        let at = r.pos();
        let layer = match r.u8()? {
            TAG_DENSE => {
                let (inputs, outputs) = (r.u32()? as usize, r.u32()? as usize);
                Layer::Dense(Dense {
                    inputs,
                    outputs,
                    weight: read_param(r, &[outputs, inputs])?,
                    bias: read_param(r, &[outputs])?,
                })
            }
            TAG_CONV => {
                let ic = r.u32()? as usize;
                let oc = r.u32()? as usize;
                let k = r.u32()? as usize;
                let padding = r.u32()? as usize;
                Layer::Conv2d(Conv2d {
                    in_channels: ic,
                    out_channels: oc,
                    kernel: k,
                    padding,
                    weight: read_param(r, &[oc, ic, k, k])?,
                    bias: read_param(r, &[oc])?,
                })
            }
            TAG_RELU => Layer::Relu,
            TAG_POOL => Layer::MaxPool2d {
                size: r.u32()? as usize,
            },
            TAG_BN => {
                let channels = r.u32()? as usize;
                let momentum = r.f32()?;
                let eps = r.f32()?;
                Layer::BatchNorm(BatchNorm {
                    channels,
                    momentum,
                    eps,
                    gamma: read_param(r, &[channels])?,
                    beta: read_param(r, &[channels])?,
                    running_mean: read_vec(r, channels)?,
                    running_var: read_vec(r, channels)?,
                })
            }
            TAG_SOFTMAX => Layer::Softmax,
            tag => {
                return Err(Error::Parse {
                    offset: at as u64,
                    msg: format!("unknown layer tag {tag}"),
                })
            }
        };
        layers.push(layer);
    }
    let at = r.pos();
    Network::new(input_shape, layers).map_err(|e| Error::Parse {
        offset: at as u64,
        msg: format!("inconsistent layer manifest: {e}"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng;

    fn sample_net() -> Network {
        let mut r = rng::rng(3);
        Network::new(
            vec![2, 6, 6],
            vec![
                Layer::Conv2d(Conv2d::new(2, 3, 3, 1, &mut r)),
                Layer::Relu,
                Layer::MaxPool2d { size: 2 },
                Layer::BatchNorm(BatchNorm::new(3)),
                Layer::Dense(Dense::new(27, 4, &mut r)),
                Layer::Softmax,
            ],
        )
        .unwrap()
    }

    #[test]
    fn round_trip_preserves_everything() {
        let ck = Checkpoint::new("classifier", 42, vec![sample_net()]).with_meta("feature_dim", 4);
        let bytes = ck.to_bytes();
        assert_eq!(&bytes[..4], b"AGP1");
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        assert_eq!(back, ck);
        assert_eq!(back.step, 42);
        assert_eq!(back.meta_parse::<usize>("feature_dim").unwrap(), 4);
        assert_eq!(back.to_bytes(), bytes);
    }

    #[test]
    fn truncation_and_magic_are_rejected() {
        let bytes = Checkpoint::new("dqn", 1, vec![sample_net()]).to_bytes();
        for cut in [0, 3, 10, bytes.len() / 2, bytes.len() - 1] {
            assert!(matches!(
                Checkpoint::from_bytes(&bytes[..cut]),
                Err(Error::Parse { .. })
            ));
        }
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
    }
}
