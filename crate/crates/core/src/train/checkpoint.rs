//! Binary checkpoint: little-endian, tensors sorted by name so the same
//! state always encodes to the same bytes.

use std::collections::BTreeMap;
use std::path::Path;

use thiserror::Error;

use super::TrainConfig;
use crate::data::io::write_atomic;
use crate::model::{init_params, FusformerParams};
use crate::tensor::{AdamState, Tensor};

pub const CKPT_MAGIC: &[u8; 8] = b"FUSFCKPT";
pub const CKPT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("not a checkpoint (magic {0:?})")]
    BadMagic([u8; 8]),
    #[error("unsupported checkpoint version {found} (expected {CKPT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint truncated while reading {what}")]
    Truncated { what: &'static str },
    #[error("checkpoint config is invalid: {0}")]
    Config(String),
    #[error("tensor {0:?} does not belong to the configured model")]
    UnknownTensor(String),
    #[error("tensor {0:?} is missing from the checkpoint")]
    MissingTensor(String),
    #[error("tensor {name:?} has shape {found:?}, model expects {expected:?}")]
    TensorShape {
        name: String,
        expected: Vec<usize>,
        found: Vec<usize>,
    },
    #[error("{0} unexpected bytes after the checkpoint")]
    TrailingBytes(usize),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

type Result<T> = std::result::Result<T, CheckpointError>;

/// Everything needed to resume a run exactly.
#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub config: TrainConfig,
    pub params: FusformerParams<Tensor<f32>>,
    pub adam: AdamState<f32>,
    pub step: u64,
    /// Patch sampler state.
    pub rng: [u64; 4],
}

fn put_u32(out: &mut Vec<u8>, v: u32) {
    out.extend_from_slice(&v.to_le_bytes());
}

fn put_tensors<'a>(out: &mut Vec<u8>, tensors: impl IntoIterator<Item = (String, &'a Tensor<f32>)>) {
    let sorted: BTreeMap<String, &Tensor<f32>> = tensors.into_iter().collect();
    put_u32(out, sorted.len() as u32);
    for (name, t) in sorted {
        put_u32(out, name.len() as u32);
        out.extend_from_slice(name.as_bytes());
        put_u32(out, t.rank() as u32);
        for &d in t.shape() {
            put_u32(out, d as u32);
        }
        for v in t.data() {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CKPT_MAGIC);
    put_u32(&mut out, CKPT_VERSION);
    let json = serde_json::to_string(&ckpt.config).expect("config serializes");
    put_u32(&mut out, json.len() as u32);
    out.extend_from_slice(json.as_bytes());
    let named = ckpt.params.named();
    put_tensors(&mut out, named.iter().map(|(n, t)| (n.clone(), *t)));
    let moments = named
        .iter()
        .zip(&ckpt.adam.m)
        .map(|((n, _), m)| (format!("m.{n}"), m))
        .chain(named.iter().zip(&ckpt.adam.v).map(|((n, _), v)| (format!("v.{n}"), v)));
    put_tensors(&mut out, moments);
    out.extend_from_slice(&ckpt.step.to_le_bytes());
    for s in ckpt.rng {
        out.extend_from_slice(&s.to_le_bytes());
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(CheckpointError::Truncated { what }),
        }
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }

    fn tensors(&mut self) -> Result<BTreeMap<String, Tensor<f32>>> {
        let count = self.u32("tensor count")?;
        let mut out = BTreeMap::new();
        for _ in 0..count {
            let len = self.u32("tensor name")? as usize;
            let name = String::from_utf8_lossy(self.take(len, "tensor name")?).into_owned();
            let rank = self.u32("tensor rank")? as usize;
            let mut shape = Vec::with_capacity(rank.min(8));
            for _ in 0..rank {
                shape.push(self.u32("tensor shape")? as usize);
            }
            let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d));
            let bytes = n
                .and_then(|n| n.checked_mul(4))
                .ok_or(CheckpointError::Truncated { what: "tensor data" })?;
            let raw = self.take(bytes, "tensor data")?;
            let data = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            let t = Tensor::new(&shape, data).map_err(|e| CheckpointError::Config(format!("tensor {name:?}: {e}")))?;
            out.insert(name, t);
        }
        Ok(out)
    }
}

/// Pull the tensors named by the model config out of `found`, in model order.
fn collect(
    template: &FusformerParams<Tensor<f32>>,
    found: &mut BTreeMap<String, Tensor<f32>>,
    prefix: &str,
) -> Result<FusformerParams<Tensor<f32>>> {
    template.try_map_named(&mut |name, t| {
        let key = format!("{prefix}{name}");
        let got = found.remove(&key).ok_or_else(|| CheckpointError::MissingTensor(key.clone()))?;
        if got.shape() != t.shape() {
            return Err(CheckpointError::TensorShape {
                name: key,
                expected: t.shape().to_vec(),
                found: got.shape().to_vec(),
            });
        }
        Ok(got)
    })
}

fn reject_leftovers(found: BTreeMap<String, Tensor<f32>>) -> Result<()> {
    match found.into_keys().next() {
        Some(name) => Err(CheckpointError::UnknownTensor(name)),
        None => Ok(()),
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader { bytes, pos: 0 };
    let magic: [u8; 8] = r.take(8, "magic")?.try_into().expect("8 bytes");
    if &magic != CKPT_MAGIC {
        return Err(CheckpointError::BadMagic(magic));
    }
    let version = r.u32("version")?;
    if version != CKPT_VERSION {
        return Err(CheckpointError::Version { found: version });
    }
    let len = r.u32("config length")? as usize;
    let json = r.take(len, "config")?;
    let config: TrainConfig = serde_json::from_slice(json).map_err(|e| CheckpointError::Config(e.to_string()))?;
    config.validate().map_err(|e| CheckpointError::Config(e.to_string()))?;

    let template = init_params::<f32>(&config.model, 0);
    let mut found = r.tensors()?;
    let params = collect(&template, &mut found, "")?;
    reject_leftovers(found)?;
    let mut moments = r.tensors()?;
    let m = collect(&template, &mut moments, "m.")?;
    let v = collect(&template, &mut moments, "v.")?;
    reject_leftovers(moments)?;
    let step = r.u64("step")?;
    let mut rng = [0u64; 4];
    for s in &mut rng {
        *s = r.u64("generator state")?;
    }
    if r.pos != bytes.len() {
        return Err(CheckpointError::TrailingBytes(bytes.len() - r.pos));
    }
    let flat = |p: FusformerParams<Tensor<f32>>| -> Vec<Tensor<f32>> {
        p.named().into_iter().map(|(_, t)| t.clone()).collect()
    };
    Ok(Checkpoint {
        config,
        params,
        adam: AdamState {
            m: flat(m),
            v: flat(v),
            step,
        },
        step,
        rng,
    })
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    write_atomic(path.as_ref(), &encode_checkpoint(ckpt))?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    decode_checkpoint(&std::fs::read(path)?)
}
