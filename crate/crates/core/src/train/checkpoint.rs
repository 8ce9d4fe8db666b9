//! Binary checkpoint: `MESHMARK1`, a `u64` little-endian manifest length,
//! a UTF-8 JSON manifest, then raw little-endian `f32` data.

use std::fs;
use std::io::Write;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{Adam, Trained, TrainConfig};
use crate::diff::{Real, Tensor};
use crate::model::{Model, ModelConfig};
use crate::nn::ParamStore;
use crate::{Error, Result};

pub const MAGIC: &[u8; 9] = b"MESHMARK1";
const VERSION: u32 = 1;

/// Serializable position of a ChaCha8 stream.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: Vec<u8>,
    pub stream: u64,
    /// `u128` as decimal text (JSON numbers cannot hold it).
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: rng.get_seed().to_vec(),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let seed: [u8; 32] = self
            .seed
            .as_slice()
            .try_into()
            .map_err(|_| Error::Checkpoint("rng seed must be 32 bytes".into()))?;
        let pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint(format!("bad rng position {:?}", self.word_pos)))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(pos);
        Ok(rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum EntryKind {
    Param,
    State,
    AdamM,
    AdamV,
}

#[derive(Debug, Serialize, Deserialize)]
struct EntryMeta {
    name: String,
    kind: EntryKind,
    shape: Vec<usize>,
    /// Byte offset into the data section.
    offset: usize,
}

#[derive(Debug, Serialize, Deserialize)]
struct Manifest {
    version: u32,
    model: ModelConfig,
    train: Option<TrainConfig>,
    epoch: usize,
    optimizer: Option<OptimizerMeta>,
    rng: Option<RngState>,
    entries: Vec<EntryMeta>,
}

#[derive(Debug, Serialize, Deserialize)]
struct OptimizerMeta {
    learning_rate: f64,
    step: u64,
}

/// Trained network plus what is needed to resume training.
#[derive(Clone, Debug)]
pub struct Checkpoint {
    pub model: Model<f32>,
    pub train: Option<TrainConfig>,
    /// Epochs completed.
    pub epoch: usize,
    pub optimizer: Option<Adam<f32>>,
    pub rng: Option<RngState>,
}

impl Checkpoint {
    /// Parameters only.
    pub fn of_model<T: Real>(model: &Model<T>) -> Self {
        Self {
            model: model.cast(),
            train: None,
            epoch: 0,
            optimizer: None,
            rng: None,
        }
    }

    pub fn of_run<T: Real>(run: &Trained<T>) -> Self {
        Self {
            model: run.model.cast(),
            train: Some(run.config.clone()),
            epoch: run.log.last().map_or(0, |r| r.epoch),
            optimizer: Some(run.optimizer.cast()),
            rng: Some(RngState::capture(&run.rng)),
        }
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let store = &self.model.store;
        let mut data: Vec<u8> = Vec::new();
        let mut entries = Vec::new();
        let mut push = |name: &str, kind: EntryKind, t: &Tensor<f32>| {
            entries.push(EntryMeta {
                name: name.to_string(),
                kind,
                shape: t.shape().to_vec(),
                offset: data.len(),
            });
            for x in t.data() {
                data.extend_from_slice(&x.to_le_bytes());
            }
        };
        for id in store.ids() {
            let kind = if store.is_trainable(id) { EntryKind::Param } else { EntryKind::State };
            push(store.name(id), kind, store.value(id));
        }
        if let Some(opt) = &self.optimizer {
            for (id, slot) in store.ids().zip(&opt.moments) {
                if let Some((m, v)) = slot {
                    push(store.name(id), EntryKind::AdamM, m);
                    push(store.name(id), EntryKind::AdamV, v);
                }
            }
        }
        let manifest = Manifest {
            version: VERSION,
            model: self.model.config.clone(),
            train: self.train.clone(),
            epoch: self.epoch,
            optimizer: self.optimizer.as_ref().map(|o| OptimizerMeta {
                learning_rate: o.lr,
                step: o.step,
            }),
            rng: self.rng.clone(),
            entries,
        };
        let json = serde_json::to_vec(&manifest)?;
        let mut out = Vec::with_capacity(MAGIC.len() + 8 + json.len() + data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&(json.len() as u64).to_le_bytes());
        out.extend_from_slice(&json);
        out.extend_from_slice(&data);
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let bad = |msg: &str| Error::Checkpoint(msg.to_string());
        if bytes.len() < MAGIC.len() || &bytes[..MAGIC.len()] != MAGIC {
            return Err(bad("not a checkpoint file (bad magic header)"));
        }
        let rest = &bytes[MAGIC.len()..];
        let len_bytes: [u8; 8] = rest
            .get(..8)
            .ok_or_else(|| bad("truncated manifest length"))?
            .try_into()
            .expect("8 bytes");
        let len = usize::try_from(u64::from_le_bytes(len_bytes)).map_err(|_| bad("manifest too large"))?;
        let json = rest.get(8..8usize.saturating_add(len)).ok_or_else(|| bad("truncated manifest"))?;
        let manifest: Manifest =
            serde_json::from_slice(json).map_err(|e| Error::Checkpoint(format!("manifest: {e}")))?;
        if manifest.version != VERSION {
            return Err(Error::Checkpoint(format!(
                "format version {} is not supported (expected {VERSION})",
                manifest.version
            )));
        }
        let data = &rest[8 + len..];
        let read = |e: &EntryMeta| -> Result<Tensor<f32>> {
            let count: usize = e.shape.iter().product();
            let end = e
                .offset
                .checked_add(count * 4)
                .ok_or_else(|| bad("entry offset overflow"))?;
            let raw = data
                .get(e.offset..end)
                .ok_or_else(|| Error::Checkpoint(format!("truncated data for {}", e.name)))?;
            let values = raw
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
                .collect();
            Ok(Tensor::new(e.shape.clone(), values)?)
        };
        let mut store = ParamStore::new();
        for e in manifest.entries.iter().filter(|e| matches!(e.kind, EntryKind::Param | EntryKind::State)) {
            store.insert(e.name.clone(), read(e)?, e.kind == EntryKind::Param);
        }
        let model = Model::with_store(manifest.model.clone(), store)?;
        let optimizer = match &manifest.optimizer {
            None => None,
            Some(meta) => {
                let mut opt = Adam::new(&model.store, meta.learning_rate);
                opt.step = meta.step;
                for e in &manifest.entries {
                    let slot = match e.kind {
                        EntryKind::AdamM => 0,
                        EntryKind::AdamV => 1,
                        _ => continue,
                    };
                    let id = model
                        .store
                        .find(&e.name)
                        .ok_or_else(|| Error::Checkpoint(format!("optimizer entry for unknown {}", e.name)))?;
                    let Some(pair) = opt.moments[id.index()].as_mut() else {
                        return Err(Error::Checkpoint(format!("optimizer entry for state {}", e.name)));
                    };
                    let t = read(e)?;
                    let target = if slot == 0 { &mut pair.0 } else { &mut pair.1 };
                    if t.shape() != target.shape() {
                        return Err(Error::Checkpoint(format!("optimizer shape mismatch for {}", e.name)));
                    }
                    *target = t;
                }
                Some(opt)
            }
        };
        Ok(Self {
            model,
            train: manifest.train,
            epoch: manifest.epoch,
            optimizer,
            rng: manifest.rng,
        })
    }

    /// Writes atomically via a temporary sibling file.
    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &self.to_bytes()?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&fs::read(path)?)
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it into place.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let name = path.file_name().ok_or_else(|| Error::Config(format!("{} is not a file path", path.display())))?;
    let tmp = dir.join(format!(".{}.tmp{}", name.to_string_lossy(), std::process::id()));
    let result = (|| -> Result<()> {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)?;
        Ok(())
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    result
}
