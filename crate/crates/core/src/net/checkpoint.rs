//! Checkpoints: a JSON manifest next to a little-endian `f64` sidecar.
//!
//! The sidecar holds the parameter vector in layout order, optionally
//! followed by the two Adam moment vectors. Each manifest entry records the
//! parameter name, shape and element offset.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::denoiser::{DenoiserParams, ModelConfig};
use super::layers::Slot;
use super::scaling::{GraspScaling, PointScaling};
use super::text::Vocabulary;
use crate::error::{Error, Result};
use crate::schedule::ScheduleConfig;
use crate::train::{AdamState, TrainConfig};

pub const FORMAT: &str = "negrasp-checkpoint-v1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerEntry {
    pub step: u64,
    /// Element offsets of the first and second moments in the sidecar.
    pub first_moment_offset: usize,
    pub second_moment_offset: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format: String,
    pub model: ModelConfig,
    pub schedule: ScheduleConfig,
    pub train: Option<TrainConfig>,
    pub vocabulary: Vocabulary,
    #[serde(default)]
    pub scaling: GraspScaling,
    #[serde(default)]
    pub point_scaling: PointScaling,
    pub seed: u64,
    pub epochs_done: usize,
    pub sidecar: String,
    pub parameter_count: usize,
    pub params: Vec<Slot>,
    pub optimizer: Option<OptimizerEntry>,
}

/// Everything restored from a checkpoint.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub params: DenoiserParams,
    pub schedule: ScheduleConfig,
    pub train: Option<TrainConfig>,
    pub seed: u64,
    pub epochs_done: usize,
    pub optimizer: Option<AdamState>,
}

pub fn sidecar_path(manifest: &Path) -> PathBuf {
    manifest.with_extension("bin")
}

pub fn save(path: &Path, ckpt: &Checkpoint) -> Result<()> {
    let bin = sidecar_path(path);
    let n = ckpt.params.len();
    let mut bytes = Vec::with_capacity(n * 8 * if ckpt.optimizer.is_some() { 3 } else { 1 });
    let mut push = |xs: &[f64]| xs.iter().for_each(|x| bytes.extend_from_slice(&x.to_le_bytes()));
    push(&ckpt.params.theta);
    let optimizer = ckpt.optimizer.as_ref().map(|adam| {
        push(&adam.m);
        push(&adam.v);
        OptimizerEntry { step: adam.step, first_moment_offset: n, second_moment_offset: 2 * n }
    });
    let manifest = CheckpointManifest {
        format: FORMAT.into(),
        model: ckpt.params.config,
        schedule: ckpt.schedule,
        train: ckpt.train.clone(),
        vocabulary: ckpt.params.vocab.clone(),
        scaling: ckpt.params.scaling,
        point_scaling: ckpt.params.point_scaling,
        seed: ckpt.seed,
        epochs_done: ckpt.epochs_done,
        sidecar: bin.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        parameter_count: n,
        params: ckpt.params.slots().to_vec(),
        optimizer,
    };
    std::fs::write(&bin, &bytes).map_err(|e| Error::io(&bin, e))?;
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let manifest: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
    if manifest.format != FORMAT {
        return Err(Error::Schema(format!("unsupported checkpoint format {:?}", manifest.format)));
    }
    let bin = path.with_file_name(&manifest.sidecar);
    let bytes = std::fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    if bytes.len() % 8 != 0 {
        return Err(Error::Schema("sidecar length is not a multiple of 8".into()));
    }
    let values: Vec<f64> = bytes
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("chunk of 8")))
        .collect();
    let n = manifest.parameter_count;
    if values.len() < n {
        return Err(Error::Schema("sidecar shorter than the parameter vector".into()));
    }
    let mut params = DenoiserParams::from_parts(manifest.model, manifest.vocabulary, values[..n].to_vec())?;
    params.scaling = manifest.scaling;
    params.point_scaling = manifest.point_scaling;
    if params.slots() != manifest.params.as_slice() {
        return Err(Error::Schema("parameter layout does not match the model config".into()));
    }
    let optimizer = match manifest.optimizer {
        Some(o) => {
            let m = values.get(o.first_moment_offset..o.first_moment_offset + n);
            let v = values.get(o.second_moment_offset..o.second_moment_offset + n);
            match (m, v) {
                (Some(m), Some(v)) => Some(AdamState { step: o.step, m: m.to_vec(), v: v.to_vec() }),
                _ => return Err(Error::Schema("optimizer moments missing from sidecar".into())),
            }
        }
        None => None,
    };
    Ok(Checkpoint {
        params,
        schedule: manifest.schedule,
        train: manifest.train,
        seed: manifest.seed,
        epochs_done: manifest.epochs_done,
        optimizer,
    })
}
