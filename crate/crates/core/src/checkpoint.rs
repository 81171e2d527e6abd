//! Checkpoint bundles: architecture, parameters, input normalization,
//! calibrated statistics and, for training checkpoints, optimizer state.
//!
//! Layout: the 8-byte magic, a little-endian `u64` header length, a JSON
//! header, then every parameter tensor followed by every velocity tensor as
//! little-endian values of the header's dtype, in header order.

use std::path::Path;

use ndarray::{ArrayD, IxDyn};
use serde::{Deserialize, Serialize};

use crate::configspace::ArchSpec;
use crate::data::ChannelNorm;
use crate::error::{A3dError, Result};
use crate::fsutil::write_atomic;
use crate::model::Model;
use crate::nn::ParamStore;
use crate::real::Real;
use crate::slimnet::StatBank;
use crate::training::{RunConfig, Sgd, TrainLog, TrainState};

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"A3DCKPT1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorMeta {
    pub name: String,
    pub shape: Vec<usize>,
    pub decay: bool,
}

/// Training progress stored with a training checkpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainMeta {
    pub config: RunConfig,
    pub epoch: usize,
    pub iteration: u64,
    pub momentum: f64,
    pub weight_decay: f64,
    pub log: TrainLog,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct Header {
    arch: ArchSpec,
    dtype: String,
    norm: ChannelNorm,
    stats: StatBank,
    tensors: Vec<TensorMeta>,
    velocity: bool,
    train: Option<TrainMeta>,
}

/// A loaded bundle.
#[derive(Debug, Clone)]
pub struct Checkpoint<T> {
    pub model: Model<T>,
    pub velocity: Option<ParamStore<T>>,
    pub train: Option<TrainMeta>,
}

impl<T: Real> Checkpoint<T> {
    /// Optimizer state and counters for resuming; errors for inference-only bundles.
    pub fn into_train_state(self) -> Result<(TrainState<T>, TrainMeta)> {
        let (velocity, meta) = match (self.velocity, self.train) {
            (Some(v), Some(m)) => (v, m),
            _ => return Err(A3dError::Invalid("checkpoint holds no training state".into())),
        };
        let state = TrainState {
            opt: Sgd {
                momentum: meta.momentum,
                weight_decay: meta.weight_decay,
                velocity,
            },
            model: self.model,
            epoch: meta.epoch,
            iteration: meta.iteration,
        };
        Ok((state, meta))
    }
}

fn tensor_meta<T: Real>(store: &ParamStore<T>) -> Vec<TensorMeta> {
    store
        .iter()
        .map(|p| TensorMeta {
            name: p.name.clone(),
            shape: p.value.shape().to_vec(),
            decay: p.decay,
        })
        .collect()
}

fn encode<T: Real>(model: &Model<T>, velocity: Option<&ParamStore<T>>, train: Option<TrainMeta>) -> Result<Vec<u8>> {
    let header = serde_json::to_vec(&Header {
        arch: model.arch.clone(),
        dtype: T::DTYPE.into(),
        norm: model.norm,
        stats: model.stats.clone(),
        tensors: tensor_meta(&model.params),
        velocity: velocity.is_some(),
        train,
    })?;
    let values = model.params.num_elements() * (1 + usize::from(velocity.is_some()));
    let mut buf = Vec::with_capacity(16 + header.len() + values * T::BYTES);
    buf.extend_from_slice(CHECKPOINT_MAGIC);
    buf.extend_from_slice(&(header.len() as u64).to_le_bytes());
    buf.extend_from_slice(&header);
    for store in std::iter::once(&model.params).chain(velocity) {
        for p in store.iter() {
            for &v in p.value.iter() {
                v.write_le(&mut buf);
            }
        }
    }
    Ok(buf)
}

/// Saves an inference bundle.
pub fn save_model<T: Real>(path: &Path, model: &Model<T>) -> Result<()> {
    write_atomic(path, &encode(model, None, None)?)
}

/// Saves a resumable training bundle.
pub fn save_training<T: Real>(path: &Path, state: &TrainState<T>, config: &RunConfig, log: &TrainLog) -> Result<()> {
    let meta = TrainMeta {
        config: config.clone(),
        epoch: state.epoch,
        iteration: state.iteration,
        momentum: state.opt.momentum,
        weight_decay: state.opt.weight_decay,
        log: log.clone(),
    };
    write_atomic(path, &encode(&state.model, Some(&state.opt.velocity), Some(meta))?)
}

/// Saves a loaded bundle back, keeping its optimizer state and run metadata.
pub fn save_checkpoint<T: Real>(path: &Path, ck: &Checkpoint<T>) -> Result<()> {
    write_atomic(path, &encode(&ck.model, ck.velocity.as_ref(), ck.train.clone())?)
}

fn read_store<T: Real>(metas: &[TensorMeta], bytes: &[u8], pos: &mut usize) -> Result<ParamStore<T>> {
    let mut store = ParamStore::new();
    for m in metas {
        let n: usize = m.shape.iter().product();
        let end = pos
            .checked_add(n * T::BYTES)
            .filter(|&e| e <= bytes.len())
            .ok_or_else(|| A3dError::Format(format!("truncated tensor '{}'", m.name)))?;
        let values: Vec<T> = bytes[*pos..end].chunks_exact(T::BYTES).map(T::read_le).collect();
        let arr = ArrayD::from_shape_vec(IxDyn(&m.shape), values).map_err(|e| A3dError::Format(e.to_string()))?;
        store.add(m.name.clone(), arr, m.decay);
        *pos = end;
    }
    Ok(store)
}

/// Loads a bundle saved with element type `T`.
pub fn load_checkpoint<T: Real>(path: &Path) -> Result<Checkpoint<T>> {
    let bytes = std::fs::read(path)?;
    let bad = |m: &str| A3dError::Format(format!("{}: {m}", path.display()));
    if bytes.len() < 16 || &bytes[..8] != CHECKPOINT_MAGIC {
        return Err(bad("not a checkpoint bundle"));
    }
    let hlen = u64::from_le_bytes(bytes[8..16].try_into().expect("8 bytes")) as usize;
    let body = 16usize.checked_add(hlen).filter(|&e| e <= bytes.len()).ok_or_else(|| bad("truncated header"))?;
    let header: Header = serde_json::from_slice(&bytes[16..body])?;
    if header.dtype != T::DTYPE {
        return Err(bad(&format!("stored as {}, requested {}", header.dtype, T::DTYPE)));
    }
    let mut pos = body;
    let params = read_store::<T>(&header.tensors, &bytes, &mut pos)?;
    let velocity = if header.velocity {
        Some(read_store::<T>(&header.tensors, &bytes, &mut pos)?)
    } else {
        None
    };
    if pos != bytes.len() {
        return Err(bad("trailing bytes after tensors"));
    }
    let mut model = Model::new(header.arch, 0)?;
    model.params.load_from(&params)?;
    model.norm = header.norm;
    model.stats = header.stats;
    let velocity = velocity
        .map(|v| {
            let mut z = model.params.zeros_like();
            z.load_from(&v).map(|_| z)
        })
        .transpose()?;
    Ok(Checkpoint {
        model,
        velocity,
        train: header.train,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::configspace::Configuration;
    use crate::slimnet::{BnStats, StatEntry};

    fn model() -> Model<f32> {
        let mut m = Model::new(ArchSpec::toy_slow_with([4, 4, 8, 8], 4), 9).unwrap();
        m.norm = ChannelNorm {
            mean: [0.1, 0.2, 0.3],
            std: [0.5, 0.6, 0.7],
        };
        let layers = vec![BnStats { mean: vec![0.25], var: vec![2.0] }];
        m.stats.insert(&Configuration::FULL, StatEntry { layers, clips: 3 });
        m
    }

    #[test]
    fn inference_bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.a3d");
        let m = model();
        save_model(&p, &m).unwrap();
        let back = load_checkpoint::<f32>(&p).unwrap();
        assert_eq!(back.model.params.checksum(), m.params.checksum());
        assert_eq!(back.model.stats, m.stats);
        assert_eq!(back.model.norm, m.norm);
        assert_eq!(back.model.arch, m.arch);
        assert!(back.velocity.is_none() && back.into_train_state().is_err());
    }

    #[test]
    fn training_bundle_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.a3d");
        let mut state = TrainState::new(model(), 0.9, 1e-4);
        state.opt.velocity.iter_mut().for_each(|v| v.value.fill(0.5));
        state.epoch = 3;
        state.iteration = 75;
        save_training(&p, &state, &RunConfig::default(), &TrainLog::default()).unwrap();
        let (back, meta) = load_checkpoint::<f32>(&p).unwrap().into_train_state().unwrap();
        assert_eq!((back.epoch, back.iteration, meta.epoch), (3, 75, 3));
        assert_eq!(back.opt.velocity.checksum(), state.opt.velocity.checksum());
        assert_eq!(back.opt.momentum, 0.9);
        assert_eq!(meta.config, RunConfig::default());
        let q = dir.path().join("u.a3d");
        save_checkpoint(&q, &load_checkpoint::<f32>(&p).unwrap()).unwrap();
        assert_eq!(std::fs::read(&p).unwrap(), std::fs::read(&q).unwrap());
    }

    #[test]
    fn rejects_corruption_and_wrong_dtype() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.a3d");
        save_model(&p, &model()).unwrap();
        assert!(load_checkpoint::<f64>(&p).is_err());
        let bytes = std::fs::read(&p).unwrap();
        std::fs::write(&p, &bytes[..bytes.len() - 1]).unwrap();
        assert!(load_checkpoint::<f32>(&p).is_err());
        std::fs::write(&p, b"garbage").unwrap();
        assert!(load_checkpoint::<f32>(&p).is_err());
    }
}
