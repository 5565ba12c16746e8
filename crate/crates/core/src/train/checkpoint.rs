//! Binary checkpoint container.
//!
//! Layout (little-endian): `AFCK`, u32 version, u32 config length + UTF-8
//! `key=value` lines, u32 tensor count, then per tensor u16 name length, name,
//! u8 rank, u32 dims, f32 payload and u32 CRC32 of the payload bytes. A CRC32 of
//! everything before it closes the file.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use crate::dataset::{ColumnStats, NormalizationStats};
use crate::error::{Error, Result};
use crate::model::{Model, ModelConfig};
use crate::nn::{Rng, RmsProp, Tensor};
use rand::SeedableRng;

pub const CHECKPOINT_MAGIC: [u8; 4] = *b"AFCK";
pub const CHECKPOINT_VERSION: u32 = 1;

const PARAM: &str = "param.";
const BUFFER: &str = "buffer.";
const OPTIM: &str = "rmsprop.";
const NORM: &str = "norm.";

/// Snapshot of a model, its optimizer caches and normalization statistics.
///
/// Values are held at f32 precision (the on-disk precision), so a checkpoint
/// predicts identically before and after a save/load round trip.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: ModelConfig,
    pub epoch: usize,
    /// Mean validation CCC of the captured state; `None` before any epoch.
    pub best_val: Option<f64>,
    pub tensors: BTreeMap<String, Tensor>,
}

fn to_f32_precision(t: &Tensor) -> Tensor {
    t.map(|v| v as f32 as f64)
}

fn vec_tensor(v: &[f64]) -> Tensor {
    Tensor::from_vec(&[v.len()], v.iter().map(|x| *x as f32 as f64).collect())
        .expect("1-d tensor")
}

impl Checkpoint {
    pub fn capture(
        model: &Model,
        optimizer: &RmsProp,
        norm: &NormalizationStats,
        epoch: usize,
        best_val: Option<f64>,
    ) -> Self {
        let mut tensors = BTreeMap::new();
        for (n, p) in model.params() {
            tensors.insert(format!("{PARAM}{n}"), to_f32_precision(&p.value));
        }
        for (n, b) in model.buffers() {
            tensors.insert(format!("{BUFFER}{n}"), to_f32_precision(b));
        }
        for (n, c) in &optimizer.cache {
            tensors.insert(format!("{OPTIM}{n}"), to_f32_precision(c));
        }
        for (m, s) in norm.iter() {
            tensors.insert(format!("{NORM}{m}.mean"), vec_tensor(&s.mean));
            tensors.insert(format!("{NORM}{m}.std"), vec_tensor(&s.std));
        }
        Self {
            model: model.config().clone(),
            epoch,
            best_val,
            tensors,
        }
    }

    /// Rebuilds the model and loads every parameter and buffer.
    pub fn restore_model(&self) -> Result<Model> {
        let mut rng = Rng::seed_from_u64(0);
        let mut model = Model::build(&self.model, &mut rng)?;
        for (n, p) in model.params_mut() {
            copy_into(&self.tensors, &format!("{PARAM}{n}"), &mut p.value)?;
        }
        for (n, b) in model.buffers_mut() {
            copy_into(&self.tensors, &format!("{BUFFER}{n}"), b)?;
        }
        let expected = model.params().len() + model.buffers().len();
        let stored = self
            .tensors
            .keys()
            .filter(|k| k.starts_with(PARAM) || k.starts_with(BUFFER))
            .count();
        if stored != expected {
            return Err(Error::Format(format!(
                "checkpoint holds {stored} model tensors, the declared config needs {expected}"
            )));
        }
        Ok(model)
    }

    pub fn optimizer(&self, lr: f64) -> RmsProp {
        let mut opt = RmsProp::new(lr);
        for (k, t) in &self.tensors {
            if let Some(n) = k.strip_prefix(OPTIM) {
                opt.cache.insert(n.to_string(), t.clone());
            }
        }
        opt
    }

    pub fn normalization(&self) -> Result<NormalizationStats> {
        let mut stats = NormalizationStats::default();
        for &m in self.model.variant.modalities() {
            let get = |what: &str| {
                self.tensors
                    .get(&format!("{NORM}{m}.{what}"))
                    .map(|t| t.data().to_vec())
                    .ok_or_else(|| Error::Format(format!("checkpoint lacks {m} {what} statistics")))
            };
            let (mean, std) = (get("mean")?, get("std")?);
            if mean.len() != std.len() || mean.len() != self.model.input_dim(m) {
                return Err(Error::Format(format!(
                    "{m} statistics have width {}/{}, model expects {}",
                    mean.len(),
                    std.len(),
                    self.model.input_dim(m)
                )));
            }
            stats.set(m, ColumnStats { mean, std });
        }
        Ok(stats)
    }

    /// Fails with [`Error::ConfigMismatch`] when any model key differs.
    pub fn check_config(&self, expected: &ModelConfig) -> Result<()> {
        for ((k, want), (_, have)) in expected.to_pairs().into_iter().zip(self.model.to_pairs()) {
            if want != have {
                return Err(Error::ConfigMismatch {
                    expected: format!("{k}={want}"),
                    found: format!("{k}={have}"),
                });
            }
        }
        Ok(())
    }

    fn config_text(&self) -> String {
        let mut s = String::new();
        for (k, v) in self.model.to_pairs() {
            s.push_str(&format!("{k}={v}\n"));
        }
        s.push_str(&format!("epoch={}\n", self.epoch));
        match self.best_val {
            Some(v) => s.push_str(&format!("best_val={v}\n")),
            None => s.push_str("best_val=none\n"),
        }
        s
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        out.extend_from_slice(&CHECKPOINT_MAGIC);
        out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
        let cfg = self.config_text();
        out.extend_from_slice(&(cfg.len() as u32).to_le_bytes());
        out.extend_from_slice(cfg.as_bytes());
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for (name, t) in &self.tensors {
            let name_len = u16::try_from(name.len())
                .map_err(|_| Error::Format(format!("tensor name too long: {name}")))?;
            let rank = u8::try_from(t.shape().len())
                .map_err(|_| Error::Format(format!("tensor {name} has too many dimensions")))?;
            out.extend_from_slice(&name_len.to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.push(rank);
            for &d in t.shape() {
                let d = u32::try_from(d)
                    .map_err(|_| Error::Format(format!("tensor {name} dimension too large")))?;
                out.extend_from_slice(&d.to_le_bytes());
            }
            let mut payload = Vec::with_capacity(4 * t.len());
            for &v in t.data() {
                payload.extend_from_slice(&(v as f32).to_le_bytes());
            }
            out.extend_from_slice(&payload);
            out.extend_from_slice(&crc32fast::hash(&payload).to_le_bytes());
        }
        let crc = crc32fast::hash(&out);
        out.extend_from_slice(&crc.to_le_bytes());
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        let magic = r.take(4, "magic")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(Error::Magic {
                expected: String::from_utf8_lossy(&CHECKPOINT_MAGIC).into_owned(),
                found: String::from_utf8_lossy(magic).into_owned(),
            });
        }
        let version = r.u32("version")?;
        if version != CHECKPOINT_VERSION {
            return Err(Error::Version {
                expected: CHECKPOINT_VERSION,
                found: version,
            });
        }
        let cfg_len = r.u32("config length")? as usize;
        let cfg = std::str::from_utf8(r.take(cfg_len, "config")?)
            .map_err(|_| Error::Format("checkpoint config is not UTF-8".into()))?;
        let mut pairs = BTreeMap::new();
        for line in cfg.lines().filter(|l| !l.trim().is_empty()) {
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Format(format!("bad checkpoint config line {line:?}")))?;
            pairs.insert(k.to_string(), v.to_string());
        }
        let epoch = pairs
            .remove("epoch")
            .ok_or_else(|| Error::Format("checkpoint config lacks epoch".into()))?
            .parse()
            .map_err(|_| Error::Format("bad epoch in checkpoint".into()))?;
        let best_val = match pairs.remove("best_val").as_deref() {
            None | Some("none") => None,
            Some(v) => Some(
                v.parse()
                    .map_err(|_| Error::Format(format!("bad best_val {v:?} in checkpoint")))?,
            ),
        };
        let model = ModelConfig::from_pairs(&pairs)?;

        let count = r.u32("tensor count")?;
        let mut tensors = BTreeMap::new();
        for _ in 0..count {
            let name_len = r.u16("tensor name length")? as usize;
            let name = std::str::from_utf8(r.take(name_len, "tensor name")?)
                .map_err(|_| Error::Format("tensor name is not UTF-8".into()))?
                .to_string();
            let rank = r.take(1, "tensor rank")?[0] as usize;
            let mut shape = Vec::with_capacity(rank);
            for _ in 0..rank {
                shape.push(r.u32("tensor dims")? as usize);
            }
            let n: usize = shape.iter().product();
            let payload = r.take(4 * n, "tensor payload")?;
            let crc = r.u32("tensor checksum")?;
            if crc32fast::hash(payload) != crc {
                return Err(Error::Checksum(format!("payload of tensor {name}")));
            }
            let data = payload
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64)
                .collect();
            tensors.insert(name, Tensor::from_vec(&shape, data)?);
        }
        let body_end = r.pos;
        let file_crc = r.u32("file checksum")?;
        if r.pos != bytes.len() {
            return Err(Error::Format(format!(
                "{} trailing bytes after checkpoint",
                bytes.len() - r.pos
            )));
        }
        if crc32fast::hash(&bytes[..body_end]) != file_crc {
            return Err(Error::Checksum("whole-file checksum".into()));
        }
        Ok(Self {
            model,
            epoch,
            best_val,
            tensors,
        })
    }
}

fn copy_into(tensors: &BTreeMap<String, Tensor>, key: &str, dst: &mut Tensor) -> Result<()> {
    let src = tensors
        .get(key)
        .ok_or_else(|| Error::Format(format!("checkpoint lacks tensor {key}")))?;
    if src.shape() != dst.shape() {
        return Err(Error::Format(format!(
            "tensor {key} has shape {:?}, the declared config needs {:?}",
            src.shape(),
            dst.shape()
        )));
    }
    dst.data_mut().copy_from_slice(src.data());
    Ok(())
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|e| *e <= self.bytes.len());
        match end {
            Some(end) => {
                let s = &self.bytes[self.pos..end];
                self.pos = end;
                Ok(s)
            }
            None => Err(Error::Truncated {
                what,
                expected: n as u64,
                found: (self.bytes.len() - self.pos) as u64,
            }),
        }
    }

    fn u16(&mut self, what: &'static str) -> Result<u16> {
        let b = self.take(2, what)?;
        Ok(u16::from_le_bytes([b[0], b[1]]))
    }

    fn u32(&mut self, what: &'static str) -> Result<u32> {
        let b = self.take(4, what)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }
}

pub fn save_checkpoint(path: impl AsRef<Path>, ckpt: &Checkpoint) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, ckpt.to_bytes()?).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Checkpoint> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    Checkpoint::from_bytes(&bytes)
}
