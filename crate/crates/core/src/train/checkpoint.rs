//! Versioned safetensors checkpoints carrying weights, optimizer moments,
//! the iteration counter, the run configuration and the RNG state.

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{DType, Device, Tensor, Var};
use rand_chacha::ChaCha8Rng;
use safetensors::tensor::{Dtype as StDtype, TensorView};
use safetensors::SafeTensors;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::models::{LatentScaling, ParamStore, TagVocab, UNetConfig};

use super::optim::AdamW;

pub const CHECKPOINT_VERSION: u32 = 1;
const META_KEY: &str = "authface";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckpointKind {
    Stage1,
    Stage2,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub version: u32,
    pub kind: CheckpointKind,
    pub iteration: u64,
    pub config: RunConfig,
    pub rng: ChaCha8Rng,
    pub model: UNetConfig,
    pub vocab: TagVocab,
    pub scaling: LatentScaling,
    /// Step counters per optimizer group.
    pub optimizer_steps: BTreeMap<String, u64>,
}

#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub meta: CheckpointMeta,
    pub tensors: BTreeMap<String, Tensor>,
}

fn st_dtype(d: DType) -> Result<StDtype> {
    match d {
        DType::F32 => Ok(StDtype::F32),
        DType::F64 => Ok(StDtype::F64),
        other => Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
    }
}

fn bytes_of(t: &Tensor) -> Result<Vec<u8>> {
    let t = t.flatten_all()?;
    Ok(match t.dtype() {
        DType::F32 => t.to_vec1::<f32>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        DType::F64 => t.to_vec1::<f64>()?.iter().flat_map(|v| v.to_le_bytes()).collect(),
        other => return Err(Error::Checkpoint(format!("unsupported dtype {other:?}"))),
    })
}

fn digest(entries: &[(String, DType, Vec<usize>, Vec<u8>)]) -> String {
    let mut h = Sha256::new();
    for (name, dtype, shape, data) in entries {
        h.update(name.as_bytes());
        h.update(format!("{dtype:?}{shape:?}").as_bytes());
        h.update(data);
    }
    hex::encode(h.finalize())
}

#[derive(Serialize, Deserialize)]
struct Header {
    meta: CheckpointMeta,
    checksum: String,
}

impl Checkpoint {
    pub fn new(meta: CheckpointMeta) -> Self {
        Self { meta, tensors: BTreeMap::new() }
    }

    pub fn insert_store(&mut self, prefix: &str, store: &ParamStore) {
        for (name, var) in store.iter() {
            self.tensors.insert(format!("{prefix}/{name}"), var.as_tensor().detach());
        }
    }

    pub fn insert_optimizer(&mut self, group: &str, opt: &AdamW) {
        for (name, m, v) in opt.state() {
            self.tensors.insert(format!("opt.{group}/m/{name}"), m.clone());
            self.tensors.insert(format!("opt.{group}/v/{name}"), v.clone());
        }
        self.meta.optimizer_steps.insert(group.to_string(), opt.steps());
    }

    /// Fresh trainable variables for every tensor under `prefix/`.
    pub fn store(&self, prefix: &str) -> Result<ParamStore> {
        let p = format!("{prefix}/");
        let mut store = ParamStore::new();
        for (name, t) in self.tensors.range(p.clone()..) {
            let Some(short) = name.strip_prefix(&p) else { break };
            store.insert(short.to_string(), Var::from_tensor(&t.copy()?)?);
        }
        if store.is_empty() {
            return Err(Error::Checkpoint(format!("no tensors under {prefix:?}")));
        }
        Ok(store)
    }

    pub fn has_group(&self, prefix: &str) -> bool {
        let p = format!("{prefix}/");
        self.tensors.range(p.clone()..).next().is_some_and(|(k, _)| k.starts_with(&p))
    }

    pub fn restore_optimizer(&self, group: &str, opt: &mut AdamW) -> Result<()> {
        let steps = *self
            .meta
            .optimizer_steps
            .get(group)
            .ok_or_else(|| Error::Checkpoint(format!("no optimizer state for {group}")))?;
        opt.restore_state(steps, |name| {
            let m = self.tensors.get(&format!("opt.{group}/m/{name}"))?;
            let v = self.tensors.get(&format!("opt.{group}/v/{name}"))?;
            Some((m.clone(), v.clone()))
        })
        .map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let entries = self
            .tensors
            .iter()
            .map(|(n, t)| Ok((n.clone(), t.dtype(), t.dims().to_vec(), bytes_of(t)?)))
            .collect::<Result<Vec<_>>>()?;
        let header = Header { meta: self.meta.clone(), checksum: digest(&entries) };
        let views = entries
            .iter()
            .map(|(n, d, s, b)| Ok((n.as_str(), TensorView::new(st_dtype(*d)?, s.clone(), b).map_err(|e| Error::Checkpoint(e.to_string()))?)))
            .collect::<Result<Vec<_>>>()?;
        let meta = HashMap::from([(META_KEY.to_string(), serde_json::to_string(&header)?)]);
        safetensors::serialize(views, Some(meta)).map_err(|e| Error::Checkpoint(e.to_string()))
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let corrupt = |why: String| Error::Checkpoint(format!("corrupted checkpoint: {why}"));
        let (_, st_meta) = SafeTensors::read_metadata(bytes).map_err(|e| corrupt(e.to_string()))?;
        let raw = st_meta
            .metadata()
            .as_ref()
            .and_then(|m| m.get(META_KEY))
            .ok_or_else(|| corrupt("missing metadata".into()))?;
        let version: serde_json::Value = serde_json::from_str(raw).map_err(|e| corrupt(e.to_string()))?;
        match version.pointer("/meta/version").and_then(|v| v.as_u64()) {
            Some(v) if v == CHECKPOINT_VERSION as u64 => {}
            Some(v) => {
                return Err(Error::Checkpoint(format!(
                    "checkpoint format version {v} is not supported (expected {CHECKPOINT_VERSION})"
                )))
            }
            None => return Err(corrupt("missing format version".into())),
        }
        let header: Header = serde_json::from_value(version).map_err(|e| corrupt(e.to_string()))?;
        let st = SafeTensors::deserialize(bytes).map_err(|e| corrupt(e.to_string()))?;
        let mut names: Vec<String> = st.names().into_iter().map(String::from).collect();
        names.sort();
        let mut entries = Vec::with_capacity(names.len());
        let mut tensors = BTreeMap::new();
        for name in names {
            let view = st.tensor(&name).map_err(|e| corrupt(e.to_string()))?;
            let dtype = match view.dtype() {
                StDtype::F32 => DType::F32,
                StDtype::F64 => DType::F64,
                other => return Err(corrupt(format!("unexpected dtype {other:?}"))),
            };
            let t = Tensor::from_raw_buffer(view.data(), dtype, view.shape(), &Device::Cpu)?;
            entries.push((name.clone(), dtype, view.shape().to_vec(), view.data().to_vec()));
            tensors.insert(name, t);
        }
        if digest(&entries) != header.checksum {
            return Err(corrupt("checksum mismatch".into()));
        }
        Ok(Self { meta: header.meta, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path)
            .map_err(|e| Error::Checkpoint(format!("cannot read {}: {e}", path.display())))?;
        Self::from_bytes(&bytes)
    }

    pub fn expect_kind(&self, kind: CheckpointKind) -> Result<()> {
        if self.meta.kind != kind {
            return Err(Error::Checkpoint(format!("expected a {kind:?} checkpoint, found {:?}", self.meta.kind)));
        }
        Ok(())
    }
}
