//! `<stem>.json` header (names, shapes, offsets, config echo) plus a
//! `<stem>.bin` payload of little-endian `f64` values.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adamw::{AdamW, Moments};
use super::model::{ModelBundle, ModelConfig, Normalizer};
use super::trainer::TrainConfig;
use crate::error::{Error, Result};
use crate::tensor::{ParamStore, Tensor};

pub const CHECKPOINT_FORMAT: &str = "icfinv-checkpoint";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    /// Byte offset into the payload.
    pub offset: u64,
}

/// Full ChaCha8 state: key, stream and position.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RngState {
    pub seed_hex: String,
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        let seed_hex = rng.get_seed().iter().map(|b| format!("{b:02x}")).collect();
        RngState {
            seed_hex,
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bad = || Error::Format(format!("invalid rng seed {:?}", self.seed_hex));
        if self.seed_hex.len() != 64 || !self.seed_hex.is_ascii() {
            return Err(bad());
        }
        let mut seed = [0u8; 32];
        for (i, byte) in seed.iter_mut().enumerate() {
            *byte = u8::from_str_radix(&self.seed_hex[2 * i..2 * i + 2], 16).map_err(|_| bad())?;
        }
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        Ok(rng)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointHeader {
    pub format: String,
    pub version: u32,
    /// Number of completed epochs.
    pub epoch: usize,
    pub image_size: usize,
    pub model: ModelConfig,
    pub train: Option<TrainConfig>,
    pub rng: Option<RngState>,
    /// Update counts of the backbone and head optimizers, when their
    /// moments are stored.
    pub optimizer_steps: Option<[u64; 2]>,
    pub payload: String,
    pub tensors: Vec<TensorEntry>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Checkpoint {
    pub header: CheckpointHeader,
    pub tensors: BTreeMap<String, Tensor>,
}

const BACKBONE: &str = "backbone.";
const HEAD: &str = "tsh.";

fn store_tensors(prefix: &str, store: &ParamStore, out: &mut Vec<(String, Tensor)>) {
    for (name, t) in store.iter() {
        out.push((format!("{prefix}{name}"), t.clone()));
    }
}

fn moment_tensors(prefix: &str, store: &ParamStore, opt: &AdamW, out: &mut Vec<(String, Tensor)>) {
    for ((name, t), mom) in store.iter().zip(&opt.moments) {
        let shape = t.shape().to_vec();
        out.push((
            format!("{prefix}{name}.m"),
            Tensor::new(shape.clone(), mom.m.clone()).expect("moment shape"),
        ));
        out.push((
            format!("{prefix}{name}.v"),
            Tensor::new(shape, mom.v.clone()).expect("moment shape"),
        ));
    }
}

impl Checkpoint {
    pub fn from_model(
        model: &ModelBundle,
        epoch: usize,
        train: Option<&TrainConfig>,
        optimizers: Option<(&AdamW, &AdamW)>,
        rng: Option<&ChaCha8Rng>,
    ) -> Self {
        let mut named = Vec::new();
        store_tensors(BACKBONE, &model.backbone.params, &mut named);
        store_tensors(HEAD, &model.head.params, &mut named);
        let n = &model.normalizer;
        for (name, v) in [
            ("normalizer.scalar_mean", &n.scalar_mean),
            ("normalizer.scalar_std", &n.scalar_std),
            ("normalizer.target_mean", &n.target_mean),
            ("normalizer.target_std", &n.target_std),
        ] {
            named.push((name.to_string(), Tensor::from_vec(v.clone())));
        }
        if let Some((ob, oh)) = optimizers {
            moment_tensors("optim.backbone.", &model.backbone.params, ob, &mut named);
            moment_tensors("optim.tsh.", &model.head.params, oh, &mut named);
        }
        let mut offset = 0u64;
        let entries = named
            .iter()
            .map(|(name, t)| {
                let e = TensorEntry {
                    name: name.clone(),
                    shape: t.shape().to_vec(),
                    offset,
                };
                offset += 8 * t.len() as u64;
                e
            })
            .collect();
        Checkpoint {
            header: CheckpointHeader {
                format: CHECKPOINT_FORMAT.into(),
                version: CHECKPOINT_VERSION,
                epoch,
                image_size: model.image_size(),
                model: model.config.clone(),
                train: train.cloned(),
                rng: rng.map(RngState::capture),
                optimizer_steps: optimizers.map(|(a, b)| [a.step, b.step]),
                payload: String::new(),
                tensors: entries,
            },
            tensors: named.into_iter().collect(),
        }
    }

    /// Write `path` (the JSON header) and the payload next to it with a
    /// `.bin` extension.
    pub fn save(&self, path: &Path) -> Result<()> {
        let payload_path = path.with_extension("bin");
        let payload_name = payload_path
            .file_name()
            .and_then(|f| f.to_str())
            .ok_or_else(|| Error::Parameter(format!("bad checkpoint path {}", path.display())))?
            .to_string();
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        let mut bytes = Vec::new();
        for entry in &self.header.tensors {
            for v in self.tensors[&entry.name].data() {
                bytes.extend_from_slice(&v.to_le_bytes());
            }
        }
        fs::write(&payload_path, bytes).map_err(|e| Error::io(&payload_path, e))?;
        let mut header = self.header.clone();
        header.payload = payload_name;
        let json = serde_json::to_string_pretty(&header).expect("header serializes");
        fs::write(path, json + "\n").map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let header: CheckpointHeader = serde_json::from_str(&text)
            .map_err(|e| Error::Format(format!("{}: {e}", path.display())))?;
        if header.format != CHECKPOINT_FORMAT || header.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "{}: not a version {CHECKPOINT_VERSION} checkpoint",
                path.display()
            )));
        }
        if Path::new(&header.payload)
            .file_name()
            .and_then(|f| f.to_str())
            != Some(header.payload.as_str())
        {
            return Err(Error::Format(format!(
                "payload {:?} must be a plain file name",
                header.payload
            )));
        }
        let payload_path: PathBuf = path.with_file_name(&header.payload);
        let bytes = fs::read(&payload_path).map_err(|e| Error::io(&payload_path, e))?;
        let mut tensors = BTreeMap::new();
        let mut expected = 0u64;
        for entry in &header.tensors {
            let count: usize = entry.shape.iter().product();
            if entry.offset != expected || count == 0 {
                return Err(Error::Format(format!(
                    "tensor {} has offset {} (expected {expected})",
                    entry.name, entry.offset
                )));
            }
            let end = entry.offset + 8 * count as u64;
            if end as usize > bytes.len() {
                return Err(Error::Format(format!(
                    "payload too short for tensor {}",
                    entry.name
                )));
            }
            let data = bytes[entry.offset as usize..end as usize]
                .chunks_exact(8)
                .map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes")))
                .collect();
            let t =
                Tensor::new(entry.shape.clone(), data).map_err(|e| Error::Format(e.to_string()))?;
            if tensors.insert(entry.name.clone(), t).is_some() {
                return Err(Error::Format(format!("duplicate tensor {}", entry.name)));
            }
            expected = end;
        }
        if expected != bytes.len() as u64 {
            return Err(Error::Format(format!(
                "payload holds {} bytes, header describes {expected}",
                bytes.len()
            )));
        }
        Ok(Checkpoint { header, tensors })
    }

    fn vector(&self, name: &str) -> Result<Vec<f64>> {
        self.tensors
            .get(name)
            .map(|t| t.data().to_vec())
            .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))
    }

    pub fn normalizer(&self) -> Result<Normalizer> {
        Ok(Normalizer {
            scalar_mean: self.vector("normalizer.scalar_mean")?,
            scalar_std: self.vector("normalizer.scalar_std")?,
            target_mean: self.vector("normalizer.target_mean")?,
            target_std: self.vector("normalizer.target_std")?,
        })
    }

    /// Rebuild the full model exactly as saved.
    pub fn to_model(&self) -> Result<ModelBundle> {
        let mut model = ModelBundle::new(
            self.header.model.clone(),
            self.header.image_size,
            self.normalizer()?,
            0,
        )?;
        self.copy_into(BACKBONE, &mut model.backbone.params)?;
        self.copy_into(HEAD, &mut model.head.params)?;
        Ok(model)
    }

    /// Overwrite only the backbone of `model`. Every backbone array must be
    /// present with a matching shape.
    pub fn load_backbone_into(&self, model: &mut ModelBundle) -> Result<()> {
        self.copy_into(BACKBONE, &mut model.backbone.params)
    }

    fn copy_into(&self, prefix: &str, store: &mut ParamStore) -> Result<()> {
        let stored = self
            .tensors
            .keys()
            .filter(|k| k.starts_with(prefix))
            .count();
        if stored != store.len() {
            return Err(Error::Format(format!(
                "checkpoint holds {stored} {prefix}* arrays, model has {}",
                store.len()
            )));
        }
        for id in store.ids().collect::<Vec<_>>() {
            let name = format!("{prefix}{}", store.name(id));
            let t = self
                .tensors
                .get(&name)
                .ok_or_else(|| Error::Format(format!("checkpoint lacks {name}")))?;
            store
                .set(id, t.clone())
                .map_err(|e| Error::Format(format!("{name}: {e}")))?;
        }
        Ok(())
    }

    /// Optimizer states, when the checkpoint stores them.
    pub fn optimizers(&self, model: &ModelBundle) -> Result<Option<(AdamW, AdamW)>> {
        let Some([sb, sh]) = self.header.optimizer_steps else {
            return Ok(None);
        };
        let wd = self.header.train.as_ref().map_or(0.0, |t| t.weight_decay);
        let restore = |prefix: &str, store: &ParamStore, step: u64| -> Result<AdamW> {
            let moments = store
                .iter()
                .map(|(name, _)| {
                    Ok(Moments {
                        m: self.vector(&format!("{prefix}{name}.m"))?,
                        v: self.vector(&format!("{prefix}{name}.v"))?,
                    })
                })
                .collect::<Result<_>>()?;
            Ok(AdamW {
                weight_decay: wd,
                step,
                moments,
            })
        };
        Ok(Some((
            restore("optim.backbone.", &model.backbone.params, sb)?,
            restore("optim.tsh.", &model.head.params, sh)?,
        )))
    }
}
