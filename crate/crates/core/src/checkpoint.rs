//! Versioned binary checkpoints.
//!
//! Layout, little-endian:
//!
//! ```text
//! "HOFCKPT\0" | u8 version | u64 seed
//! u32 config_len | config JSON
//! u32 tensor_count | tensors
//! u8 has_adam [ adam config 4×f64 | u64 step | u32 n | n first moments | n second moments ]
//! SHA-256 of every preceding byte (32 bytes)
//! ```
//!
//! A tensor is `u16 name_len | name | u8 slot | u8 ndim | u32 dims… | f32 values…`.
//! Adam moments reuse the tensor encoding with the owning parameter's name.

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::fsutil::write_atomic;
use crate::model::{Classifier, ModelConfig, ModelError, ModelParams};
use crate::nn::{AdamConfig, AdamState, Module, Slot, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"HOFCKPT\0";
pub const CHECKPOINT_VERSION: u8 = 1;
const DIGEST_LEN: usize = 32;

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a checkpoint file (bad magic)")]
    BadMagic,
    #[error("checksum mismatch: file is corrupted")]
    Checksum,
    #[error("checkpoint format version {found} is not supported (expected {expected})")]
    Version { found: u8, expected: u8 },
    #[error("checkpoint truncated while reading {0}")]
    Truncated(&'static str),
    #[error("malformed checkpoint: {0}")]
    Malformed(String),
    #[error("stored config is invalid: {0}")]
    Config(#[from] ModelError),
}

/// Everything needed to resume training or serve predictions.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: ModelConfig,
    pub params: ModelParams<f32>,
    pub adam: Option<AdamState<f32>>,
    pub seed: u64,
}

impl Checkpoint {
    pub fn classifier(&self) -> Classifier {
        Classifier {
            config: self.config.clone(),
            params: self.params.clone(),
        }
    }
}

fn put_tensor(out: &mut Vec<u8>, name: &str, slot: Slot, t: &Tensor<f32>) {
    out.extend_from_slice(&(name.len() as u16).to_le_bytes());
    out.extend_from_slice(name.as_bytes());
    out.push(match slot {
        Slot::Param => 0,
        Slot::Buffer => 1,
    });
    out.push(t.shape().len() as u8);
    for &d in t.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn encode_checkpoint(ckpt: &Checkpoint) -> Vec<u8> {
    encode_with_version(ckpt, CHECKPOINT_VERSION)
}

fn encode_with_version(ckpt: &Checkpoint, version: u8) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.push(version);
    out.extend_from_slice(&ckpt.seed.to_le_bytes());
    let config = serde_json::to_vec(&ckpt.config).expect("config serializes");
    out.extend_from_slice(&(config.len() as u32).to_le_bytes());
    out.extend_from_slice(&config);

    let tensors = ckpt.params.tensors();
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, slot, t) in &tensors {
        put_tensor(&mut out, name, *slot, t);
    }

    match &ckpt.adam {
        None => out.push(0),
        Some(adam) => {
            out.push(1);
            let c = adam.config;
            for v in [c.learning_rate, c.beta1, c.beta2, c.epsilon] {
                out.extend_from_slice(&v.to_le_bytes());
            }
            out.extend_from_slice(&adam.step.to_le_bytes());
            out.extend_from_slice(&(adam.first_moment.len() as u32).to_le_bytes());
            let names: Vec<&String> = tensors.iter().filter(|t| t.1 == Slot::Param).map(|t| &t.0).collect();
            for moments in [&adam.first_moment, &adam.second_moment] {
                for (k, m) in moments.iter().enumerate() {
                    let name = names.get(k).map(|s| s.as_str()).unwrap_or("");
                    put_tensor(&mut out, name, Slot::Param, m);
                }
            }
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], CheckpointError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or(CheckpointError::Truncated(what))?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self, what: &'static str) -> Result<u8, CheckpointError> {
        Ok(self.take(1, what)?[0])
    }

    fn u16(&mut self, what: &'static str) -> Result<u16, CheckpointError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32, CheckpointError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &'static str) -> Result<u64, CheckpointError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn f64(&mut self, what: &'static str) -> Result<f64, CheckpointError> {
        Ok(f64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }

    fn tensor(&mut self) -> Result<(String, Slot, Tensor<f32>), CheckpointError> {
        let n = self.u16("tensor name length")? as usize;
        let name = std::str::from_utf8(self.take(n, "tensor name")?)
            .map_err(|_| CheckpointError::Malformed("tensor name is not UTF-8".into()))?
            .to_string();
        let slot = match self.u8("tensor slot")? {
            0 => Slot::Param,
            1 => Slot::Buffer,
            s => return Err(CheckpointError::Malformed(format!("{name}: unknown slot {s}"))),
        };
        let ndim = self.u8("tensor rank")? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(self.u32("tensor shape")? as usize);
        }
        let len: usize = shape.iter().product();
        let raw = self.take(len.checked_mul(4).ok_or(CheckpointError::Truncated("tensor values"))?, "tensor values")?;
        let values: Vec<f32> = raw.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap())).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(CheckpointError::Malformed(format!("{name}: non-finite value")));
        }
        let t = Tensor::from_vec(&shape, values).map_err(|e| CheckpointError::Malformed(format!("{name}: {e}")))?;
        Ok((name, slot, t))
    }
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint, CheckpointError> {
    if bytes.len() < CHECKPOINT_MAGIC.len() || &bytes[..CHECKPOINT_MAGIC.len()] != CHECKPOINT_MAGIC {
        return Err(CheckpointError::BadMagic);
    }
    if bytes.len() < CHECKPOINT_MAGIC.len() + 1 + DIGEST_LEN {
        return Err(CheckpointError::Truncated("header"));
    }
    let (body, digest) = bytes.split_at(bytes.len() - DIGEST_LEN);
    if Sha256::digest(body).as_slice() != digest {
        return Err(CheckpointError::Checksum);
    }
    let mut r = Reader {
        bytes: body,
        pos: CHECKPOINT_MAGIC.len(),
    };
    let version = r.u8("version")?;
    if version != CHECKPOINT_VERSION {
        return Err(CheckpointError::Version {
            found: version,
            expected: CHECKPOINT_VERSION,
        });
    }
    let seed = r.u64("seed")?;
    let n = r.u32("config length")? as usize;
    let config: ModelConfig = serde_json::from_slice(r.take(n, "config")?)
        .map_err(|e| CheckpointError::Malformed(format!("config: {e}")))?;

    let mut params = ModelParams::<f32>::new(&config)?;
    let count = r.u32("tensor count")? as usize;
    {
        let mut slots = params.tensors_mut();
        if slots.len() != count {
            return Err(CheckpointError::Malformed(format!(
                "{count} tensors stored, config implies {}",
                slots.len()
            )));
        }
        for (name, slot, dest) in slots.iter_mut() {
            let (stored, stored_slot, t) = r.tensor()?;
            if stored != *name || stored_slot != *slot || t.shape() != dest.shape() {
                return Err(CheckpointError::Malformed(format!(
                    "tensor {stored} {:?} does not fit {name} {:?}",
                    t.shape(),
                    dest.shape()
                )));
            }
            **dest = t;
        }
    }

    let adam = match r.u8("adam flag")? {
        0 => None,
        1 => {
            let config = AdamConfig {
                learning_rate: r.f64("adam config")?,
                beta1: r.f64("adam config")?,
                beta2: r.f64("adam config")?,
                epsilon: r.f64("adam config")?,
            };
            let step = r.u64("adam step")?;
            let n = r.u32("adam moment count")? as usize;
            let shapes: Vec<Vec<usize>> = params.params().iter().map(|t| t.shape().to_vec()).collect();
            if n != 0 && n != shapes.len() {
                return Err(CheckpointError::Malformed(format!("{n} adam moments for {} parameters", shapes.len())));
            }
            let read = |r: &mut Reader| -> Result<Vec<Tensor<f32>>, CheckpointError> {
                (0..n)
                    .map(|k| {
                        let (_, _, t) = r.tensor()?;
                        if t.shape() != shapes[k].as_slice() {
                            return Err(CheckpointError::Malformed(format!("adam moment {k} has wrong shape")));
                        }
                        Ok(t)
                    })
                    .collect()
            };
            let first_moment = read(&mut r)?;
            let second_moment = read(&mut r)?;
            Some(AdamState {
                config,
                step,
                first_moment,
                second_moment,
            })
        }
        f => return Err(CheckpointError::Malformed(format!("bad adam flag {f}"))),
    };
    if r.pos != body.len() {
        return Err(CheckpointError::Malformed(format!("{} trailing bytes", body.len() - r.pos)));
    }
    Ok(Checkpoint {
        config,
        params,
        adam,
        seed,
    })
}

/// Writes atomically: a failed save never leaves a partial file behind.
pub fn save_checkpoint(ckpt: &Checkpoint, path: impl AsRef<Path>) -> Result<(), CheckpointError> {
    let path = path.as_ref();
    write_atomic(path, &encode_checkpoint(ckpt)).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint, CheckpointError> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|source| CheckpointError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    decode_checkpoint(&bytes)
}

/// Hex SHA-256 of the encoded checkpoint.
pub fn checkpoint_digest(ckpt: &Checkpoint) -> String {
    let bytes = encode_checkpoint(ckpt);
    bytes[bytes.len() - DIGEST_LEN..].iter().map(|b| format!("{b:02x}")).collect()
}
