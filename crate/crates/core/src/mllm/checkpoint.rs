use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::model::TinyModel;
use super::store::{ParamStore, TensorMeta};
use super::{LoraConfig, MllmError, ModelConfig, Result};

pub const CHECKPOINT_FORMAT: &str = "omkit-checkpoint-v1";

/// Describes a flat little-endian f32 parameter file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CheckpointManifest {
    pub format: String,
    pub dtype: String,
    pub config: ModelConfig,
    pub lora: Option<LoraConfig>,
    pub seed: u64,
    pub tensors: Vec<TensorMeta>,
    pub n_values: usize,
    pub sha256: String,
}

impl CheckpointManifest {
    pub fn from_json(text: &str) -> Result<Self> {
        let m: Self = serde_json::from_str(text).map_err(|e| MllmError::Checkpoint(e.to_string()))?;
        if m.format != CHECKPOINT_FORMAT || m.dtype != "f32le" {
            return Err(MllmError::Checkpoint(format!("unsupported format {} / {}", m.format, m.dtype)));
        }
        m.config.validate()?;
        Ok(m)
    }
}

fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Serializes parameters as f32 and builds the matching manifest.
pub fn encode_checkpoint(model: &TinyModel) -> (Vec<u8>, CheckpointManifest) {
    let data = &model.params().data;
    let mut bytes = Vec::with_capacity(data.len() * 4);
    for v in data {
        bytes.extend_from_slice(&(*v as f32).to_le_bytes());
    }
    let manifest = CheckpointManifest {
        format: CHECKPOINT_FORMAT.to_string(),
        dtype: "f32le".to_string(),
        config: model.config().clone(),
        lora: model.lora_config(),
        seed: model.config().seed,
        tensors: model.params().metas().to_vec(),
        n_values: data.len(),
        sha256: hex_sha256(&bytes),
    };
    (bytes, manifest)
}

pub fn decode_checkpoint(bytes: &[u8], manifest: &CheckpointManifest) -> Result<TinyModel> {
    if Some(bytes.len()) != manifest.n_values.checked_mul(4) {
        return Err(MllmError::Checkpoint(format!("expected {} values, file has {} bytes", manifest.n_values, bytes.len())));
    }
    if hex_sha256(bytes) != manifest.sha256 {
        return Err(MllmError::Checkpoint("checksum mismatch".into()));
    }
    let data: Vec<f64> = bytes.chunks_exact(4).map(|c| f32::from_le_bytes([c[0], c[1], c[2], c[3]]) as f64).collect();
    let store = ParamStore::from_parts(manifest.tensors.clone(), data)?;
    TinyModel::from_store(manifest.config.clone(), store, manifest.lora)
}

/// Writes `<path>` (parameters) and `<path>.json` (manifest).
pub fn save_checkpoint(model: &TinyModel, path: &Path) -> Result<CheckpointManifest> {
    let (bytes, manifest) = encode_checkpoint(model);
    std::fs::write(path, bytes)?;
    std::fs::write(manifest_path(path), serde_json::to_string_pretty(&manifest).expect("manifest serializes"))?;
    Ok(manifest)
}

pub fn load_checkpoint(path: &Path) -> Result<TinyModel> {
    let manifest = CheckpointManifest::from_json(&std::fs::read_to_string(manifest_path(path))?)?;
    decode_checkpoint(&std::fs::read(path)?, &manifest)
}

pub fn manifest_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}
