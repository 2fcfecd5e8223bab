use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{ModelConfig, TdaNet};
use crate::numerics::Scalar;
use crate::{Error, Result};

/// Optional trainer bookkeeping carried alongside the weights so training can
/// resume with continued epoch numbering.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct TrainerState {
    pub epoch: usize,
    pub lr: f64,
    pub best_val_loss: f64,
    pub epochs_since_best: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
    /// Byte offset into the sibling binary file.
    offset: u64,
    /// Element count; bytes are `len * width(precision)`.
    len: u64,
}

/// Checkpoint manifest: JSON text describing the tensor layout of the sibling
/// binary file (same path with a `.bin` extension), plus the config snapshot
/// and the creation seed. Binary payload is raw little-endian floats in
/// manifest order; the round trip is bit-exact.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub config: ModelConfig,
    pub seed: u64,
    pub precision: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trainer: Option<TrainerState>,
    tensors: Vec<TensorEntry>,
}

fn bin_path(manifest_path: &Path) -> PathBuf {
    manifest_path.with_extension("bin")
}

/// Writes `<path>` (JSON manifest) and `<path with .bin>` (raw weights).
pub fn save_checkpoint<T: Scalar>(
    model: &TdaNet<T>,
    manifest_path: &Path,
    trainer: Option<TrainerState>,
) -> Result<()> {
    let mut tensors = Vec::new();
    let mut payload: Vec<u8> = Vec::new();
    for (name, tensor) in model.params().iter() {
        let offset = payload.len() as u64;
        let data = tensor.to_vec();
        for v in &data {
            v.write_le(&mut payload);
        }
        tensors.push(TensorEntry {
            name: name.to_string(),
            shape: tensor.shape(),
            offset,
            len: data.len() as u64,
        });
    }
    let manifest = CheckpointManifest {
        config: model.config().clone(),
        seed: model.params().seed(),
        precision: T::PRECISION.to_string(),
        trainer,
        tensors,
    };
    let json = serde_json::to_string_pretty(&manifest)?;
    fs::write(manifest_path, json).map_err(|e| Error::io(manifest_path, e))?;
    let bp = bin_path(manifest_path);
    fs::write(&bp, payload).map_err(|e| Error::io(bp.clone(), e))?;
    Ok(())
}

pub fn load_manifest(manifest_path: &Path) -> Result<CheckpointManifest> {
    let text =
        fs::read_to_string(manifest_path).map_err(|e| Error::io(manifest_path, e))?;
    Ok(serde_json::from_str(&text)?)
}

/// Rebuilds the model from a manifest/binary pair. Precision must match the
/// requested scalar type.
pub fn load_checkpoint<T: Scalar>(
    manifest_path: &Path,
) -> Result<(TdaNet<T>, CheckpointManifest)> {
    let manifest = load_manifest(manifest_path)?;
    if manifest.precision != T::PRECISION {
        return Err(Error::Format {
            path: manifest_path.to_path_buf(),
            detail: format!(
                "checkpoint precision {} does not match requested {}",
                manifest.precision,
                T::PRECISION
            ),
        });
    }
    let bp = bin_path(manifest_path);
    let payload = fs::read(&bp).map_err(|e| Error::io(bp.clone(), e))?;
    let model = TdaNet::<T>::new(manifest.config.clone(), manifest.seed)?;
    let width = T::BYTE_WIDTH;
    for entry in &manifest.tensors {
        let start = entry.offset as usize;
        let end = start + entry.len as usize * width;
        if end > payload.len() {
            return Err(Error::Format {
                path: bp.clone(),
                detail: format!(
                    "tensor `{}` extends past the end of the binary payload",
                    entry.name
                ),
            });
        }
        let data: Vec<T> = payload[start..end]
            .chunks_exact(width)
            .map(T::read_le)
            .collect();
        model.load_values(&entry.name, data)?;
    }
    Ok((model, manifest))
}
