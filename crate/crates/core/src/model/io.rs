//! Model checkpoints: the tensor container (f32) plus a JSON sidecar with
//! the config and the vocabulary fingerprint, so checkpoints are
//! self-describing and vocab mismatches are caught by hash.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use ddvqa_tensor::checkpoint::{self, Dtype};
use ddvqa_text::Vocabulary;

use super::{DdvqaModel, ModelConfig, ModelError};
use crate::rng::derive;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointMeta {
    pub config: ModelConfig,
    pub vocab_sha256: String,
}

/// SHA-256 over the id-ordered token list.
pub fn vocab_fingerprint(vocab: &Vocabulary) -> String {
    let mut hasher = Sha256::new();
    for id in 0..vocab.len() {
        hasher.update(vocab.token_of(id).expect("dense ids").as_bytes());
        hasher.update(b"\n");
    }
    format!("{:x}", hasher.finalize())
}

pub fn sidecar_path(ckpt: &Path) -> PathBuf {
    let mut name = ckpt.file_name().unwrap_or_default().to_os_string();
    name.push(".meta.json");
    ckpt.with_file_name(name)
}

/// Writes `<path>` (f32 container) and `<path>.meta.json`.
pub fn save_model(
    path: &Path,
    model: &mut DdvqaModel,
    vocab_sha256: &str,
) -> Result<(), ModelError> {
    let entries: Vec<(String, Vec<usize>, Vec<f64>)> = model
        .named_parameters()
        .into_iter()
        .map(|(name, t)| (name, t.shape().to_vec(), t.data().to_vec()))
        .collect();
    checkpoint::save(path, &entries, Dtype::F32)?;
    let meta = CheckpointMeta {
        config: model.config().clone(),
        vocab_sha256: vocab_sha256.to_string(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("meta serializes");
    std::fs::write(sidecar_path(path), json)
        .map_err(|e| ModelError::Checkpoint(format!("sidecar write: {e}")))?;
    Ok(())
}

/// Rebuilds the model from a container and its sidecar. Every parameter
/// must be present with the right shape; extras are rejected.
pub fn load_model(path: &Path) -> Result<(DdvqaModel, CheckpointMeta), ModelError> {
    let meta_raw = std::fs::read_to_string(sidecar_path(path))
        .map_err(|e| ModelError::Checkpoint(format!("sidecar read: {e}")))?;
    let meta: CheckpointMeta = serde_json::from_str(&meta_raw)
        .map_err(|e| ModelError::Checkpoint(format!("sidecar parse: {e}")))?;
    let mut loaded: BTreeMap<String, (Vec<usize>, Vec<f64>)> = checkpoint::load(path)?
        .into_iter()
        .map(|t| (t.name, (t.shape, t.data)))
        .collect();

    // Structure from config, then overwrite every tensor.
    let mut rng = derive(0, "checkpoint-load");
    let mut model = DdvqaModel::new(meta.config.clone(), &mut rng)?;
    let mut missing = Vec::new();
    model.for_each_param_mut(&mut |name, tensor| {
        match loaded.remove(name) {
            Some((shape, data)) if shape == tensor.shape() => {
                *tensor = ddvqa_tensor::Tensor::param(shape, data).expect("validated shape");
            }
            Some((shape, _)) => missing.push(format!(
                "{name}: shape {:?} in file, {:?} in model",
                shape,
                tensor.shape()
            )),
            None => missing.push(format!("{name}: absent from checkpoint")),
        }
    });
    if !missing.is_empty() {
        return Err(ModelError::Checkpoint(missing.join("; ")));
    }
    if !loaded.is_empty() {
        let extras: Vec<String> = loaded.keys().cloned().collect();
        return Err(ModelError::Checkpoint(format!(
            "unexpected tensors: {}",
            extras.join(", ")
        )));
    }
    Ok((model, meta))
}
