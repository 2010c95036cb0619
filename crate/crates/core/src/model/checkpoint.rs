//! Binary checkpoint format.
//!
//! ```text
//! "OSEGCKPT"            8 bytes
//! version               u32 LE
//! header length         u64 LE
//! header                JSON: config, seed, meta, tensor table, optimizer
//! parameters            f32 LE, tensor table order
//! Adam m, Adam v        f32 LE, same order (only with optimizer state)
//! SHA-256               32 bytes over everything above
//! ```

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

use crate::scenegen::Scene;

use super::train::{train, Adam, AdamConfig, TrainConfig, TrainState};
use super::{Arm, Model, ModelConfig};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"OSEGCKPT";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CheckpointMeta {
    pub step: u64,
    pub epoch: u64,
    pub train_seed: Option<u64>,
    pub dataset_seed: Option<u64>,
    pub last_loss: Option<f64>,
}

/// A model plus optional optimizer state for resuming.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub seed: u64,
    pub meta: CheckpointMeta,
    pub train_state: Option<TrainState>,
}

#[derive(Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Element offset into the parameter block.
    offset: usize,
}

#[derive(Serialize, Deserialize)]
struct OptimizerHeader {
    adam: AdamConfig,
    t: u64,
    step: u64,
    epoch: u64,
    next_index: usize,
}

#[derive(Serialize, Deserialize)]
struct Header {
    config: ModelConfig,
    seed: u64,
    meta: CheckpointMeta,
    tensors: Vec<TensorEntry>,
    optimizer: Option<OptimizerHeader>,
}

fn push_f32s(out: &mut Vec<u8>, t: &Tensor<f32>) {
    for v in t.data() {
        out.extend_from_slice(&v.to_le_bytes());
    }
}

pub fn checkpoint_bytes(ck: &Checkpoint) -> Result<Vec<u8>> {
    let mut offset = 0;
    let tensors = ck
        .model
        .store
        .iter()
        .map(|(name, t)| {
            let e = TensorEntry { name: name.to_string(), shape: t.shape().to_vec(), offset };
            offset += t.len();
            e
        })
        .collect();
    let optimizer = ck.train_state.as_ref().map(|s| OptimizerHeader {
        adam: s.adam.config,
        t: s.adam.t,
        step: s.step,
        epoch: s.epoch,
        next_index: s.next_index,
    });
    let header = Header { config: ck.model.config.clone(), seed: ck.seed, meta: ck.meta.clone(), tensors, optimizer };
    let json = serde_json::to_vec(&header)?;
    let mut out = Vec::with_capacity(24 + json.len() + 12 * offset + 32);
    out.extend_from_slice(CHECKPOINT_MAGIC);
    out.extend_from_slice(&CHECKPOINT_VERSION.to_le_bytes());
    out.extend_from_slice(&(json.len() as u64).to_le_bytes());
    out.extend_from_slice(&json);
    for (_, t) in ck.model.store.iter() {
        push_f32s(&mut out, t);
    }
    if let Some(s) = &ck.train_state {
        for t in s.adam.m.iter().chain(&s.adam.v) {
            push_f32s(&mut out, t);
        }
    }
    let digest = Sha256::digest(&out);
    out.extend_from_slice(&digest);
    Ok(out)
}

/// Writes atomically via a temporary file in the same directory.
pub fn save_checkpoint(path: &Path, ck: &Checkpoint) -> Result<()> {
    let bytes = checkpoint_bytes(ck)?;
    let tmp = path.with_extension("tmp");
    std::fs::write(&tmp, bytes)?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint> {
    let bytes = std::fs::read(path)?;
    parse_checkpoint(&bytes).map_err(|e| match e {
        Error::Corruption { reason, .. } => Error::Corruption { path: path.to_path_buf(), reason },
        other => other,
    })
}

fn corrupt(reason: impl Into<String>) -> Error {
    Error::Corruption { path: Default::default(), reason: reason.into() }
}

fn read_f32s(bytes: &[u8], n: usize, cursor: &mut usize) -> Result<Vec<f32>> {
    let end = *cursor + 4 * n;
    let chunk = bytes.get(*cursor..end).ok_or_else(|| corrupt("truncated tensor data"))?;
    *cursor = end;
    Ok(chunk.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect())
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    if bytes.len() < 20 + 32 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(Error::Format("not a checkpoint file".into()));
    }
    let version = u32::from_le_bytes(bytes[8..12].try_into().expect("4 bytes"));
    if version != CHECKPOINT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let (body, trailer) = bytes.split_at(bytes.len() - 32);
    if Sha256::digest(body).as_slice() != trailer {
        return Err(corrupt("checksum mismatch"));
    }
    let hlen = u64::from_le_bytes(bytes[12..20].try_into().expect("8 bytes")) as usize;
    let json = body.get(20..20 + hlen).ok_or_else(|| corrupt("truncated header"))?;
    let header: Header = serde_json::from_slice(json)?;
    let mut model = Model::<f32>::new_unchecked(header.config, header.seed)?;
    if model.store.len() != header.tensors.len() {
        return Err(Error::Format("tensor table does not match the configured model".into()));
    }
    let mut cursor = 20 + hlen;
    let ids: Vec<_> = model.store.ids().collect();
    for (id, entry) in ids.iter().zip(&header.tensors) {
        let t = model.store.get(*id);
        if model.store.name(*id) != entry.name || t.shape() != entry.shape.as_slice() {
            return Err(Error::Format(format!("unexpected tensor {} {:?}", entry.name, entry.shape)));
        }
        let data = read_f32s(body, t.len(), &mut cursor)?;
        model.store.get_mut(*id).data_mut().copy_from_slice(&data);
    }
    let train_state = match header.optimizer {
        None => None,
        Some(o) => {
            let read_all = |cursor: &mut usize| -> Result<Vec<Tensor<f32>>> {
                ids.iter()
                    .map(|id| {
                        let shape = model.store.get(*id).shape().to_vec();
                        let n = shape.iter().product();
                        Tensor::new(shape, read_f32s(body, n, cursor)?)
                    })
                    .collect()
            };
            let m = read_all(&mut cursor)?;
            let v = read_all(&mut cursor)?;
            Some(TrainState {
                step: o.step,
                epoch: o.epoch,
                next_index: o.next_index,
                adam: Adam { config: o.adam, t: o.t, m, v },
            })
        }
    };
    if cursor != body.len() {
        return Err(corrupt("trailing bytes after tensor data"));
    }
    Ok(Checkpoint { model, seed: header.seed, meta: header.meta, train_state })
}

/// Loads `path` if it exists, otherwise trains a fresh `arm` model with
/// `seed` and saves it there.
pub fn train_or_load(path: &Path, arm: Arm, seed: u64, scenes: &[Scene], tcfg: &TrainConfig) -> Result<Model<f32>> {
    if path.exists() {
        let ck = load_checkpoint(path)?;
        if ck.model.config.arm != arm || ck.seed != seed {
            return Err(Error::Config(format!("{} holds a different arm or seed", path.display())));
        }
        return Ok(ck.model);
    }
    let mut model = Model::new(ModelConfig { arm, ..Default::default() }, seed)?;
    let cfg = TrainConfig { seed, ..tcfg.clone() };
    let state = TrainState::new(&model, cfg.adam);
    let (report, state) = train(&mut model, scenes, &cfg, state, |info, _, _| {
        if info.step % 100 == 0 {
            log::info!("{arm} seed {seed}: step {} loss {:.5}", info.step, info.loss);
        }
        Ok(())
    })?;
    let meta = CheckpointMeta {
        step: state.step,
        epoch: state.epoch,
        train_seed: Some(seed),
        dataset_seed: None,
        last_loss: report.step_losses.last().copied(),
    };
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    save_checkpoint(path, &Checkpoint { model: model.clone(), seed, meta, train_state: None })?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(with_state: bool) -> Checkpoint {
        let model = Model::<f32>::new_unchecked(ModelConfig::tiny(), 11).unwrap();
        let train_state = with_state.then(|| {
            let mut s = TrainState::new(&model, AdamConfig::default());
            s.step = 7;
            s.adam.t = 7;
            s.adam.m[0].data_mut()[0] = 0.25;
            s
        });
        Checkpoint { model, seed: 11, meta: CheckpointMeta { step: 7, ..Default::default() }, train_state }
    }

    #[test]
    fn round_trip_is_bit_exact() {
        for with_state in [false, true] {
            let ck = sample(with_state);
            let bytes = checkpoint_bytes(&ck).unwrap();
            let back = parse_checkpoint(&bytes).unwrap();
            assert_eq!(back.meta, ck.meta);
            assert_eq!(back.train_state, ck.train_state);
            for ((_, a), (_, b)) in back.model.store.iter().zip(ck.model.store.iter()) {
                assert_eq!(a, b);
            }
            assert_eq!(checkpoint_bytes(&back).unwrap(), bytes);
        }
    }

    #[test]
    fn flipped_byte_is_corruption() {
        let mut bytes = checkpoint_bytes(&sample(true)).unwrap();
        let mid = bytes.len() / 2;
        bytes[mid] ^= 1;
        assert!(matches!(parse_checkpoint(&bytes), Err(Error::Corruption { .. })));
    }

    #[test]
    fn wrong_magic_is_format_error() {
        let mut bytes = checkpoint_bytes(&sample(false)).unwrap();
        bytes[0] = b'X';
        assert!(matches!(parse_checkpoint(&bytes), Err(Error::Format(_))));
    }
}
