//! Checkpoint directories: `params.json` (config, hash, tensor table) and
//! `params.bin` (little-endian binary32 in table order).

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::interchange::{decode_f32_le, encode_f32_le, sha256_hex};
use crate::error::{Error, Result};
use crate::model::config::ModelConfig;
use crate::model::params::ModelParams;

pub const CHECKPOINT_FORMAT_VERSION: &str = "emoscale-params-v1";

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct TensorEntry {
    name: String,
    shape: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ParamsManifest {
    format_version: String,
    cfg: ModelConfig,
    cfg_hash: String,
    tensors: Vec<TensorEntry>,
    bin_sha256: String,
}

/// Write `params` for `cfg` into `dir`. Values are stored as binary32.
pub fn save_params(params: &ModelParams, cfg: &ModelConfig, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut values = Vec::new();
    let mut tensors = Vec::new();
    for (name, t, _) in params.tensors() {
        values.extend(t.data.iter().map(|&v| v as f32));
        tensors.push(TensorEntry {
            name,
            shape: t.shape.clone(),
        });
    }
    let bytes = encode_f32_le(&values);
    let bin = dir.join("params.bin");
    fs::write(&bin, &bytes).map_err(|e| Error::io(&bin, e))?;
    let manifest = ParamsManifest {
        format_version: CHECKPOINT_FORMAT_VERSION.into(),
        cfg: cfg.clone(),
        cfg_hash: cfg.hash(),
        tensors,
        bin_sha256: sha256_hex(&bytes),
    };
    let path = dir.join("params.json");
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, text).map_err(|e| Error::io(&path, e))
}

/// Read a checkpoint, returning the config stored with it.
pub fn load_checkpoint(dir: impl AsRef<Path>) -> Result<(ModelConfig, ModelParams)> {
    let dir = dir.as_ref();
    let path = dir.join("params.json");
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: ParamsManifest = serde_json::from_str(&text)
        .map_err(|e| Error::CorruptCheckpoint(format!("{}: {e}", path.display())))?;
    if m.format_version != CHECKPOINT_FORMAT_VERSION {
        return Err(Error::UnknownFormatVersion {
            expected: CHECKPOINT_FORMAT_VERSION.into(),
            found: m.format_version,
        });
    }
    if m.cfg.hash() != m.cfg_hash {
        return Err(Error::CorruptCheckpoint(format!(
            "stored hash {} does not match stored config",
            m.cfg_hash
        )));
    }
    let shapes = m.cfg.derive()?;
    let mut params = ModelParams::zeros(&m.cfg, &shapes);

    let bin = dir.join("params.bin");
    let bytes = fs::read(&bin).map_err(|e| Error::io(&bin, e))?;
    let expected: usize = params.tensors().iter().map(|(_, t, _)| t.len() * 4).sum();
    if bytes.len() != expected {
        return Err(Error::CorruptCheckpoint(format!(
            "params.bin has {} bytes, expected {expected}",
            bytes.len()
        )));
    }
    if sha256_hex(&bytes) != m.bin_sha256 {
        return Err(Error::CorruptCheckpoint("params.bin checksum mismatch".into()));
    }
    let values = decode_f32_le(&bytes);
    let mut cursor = 0;
    let slots = params.tensors_mut();
    if slots.len() != m.tensors.len() {
        return Err(Error::CorruptCheckpoint("tensor table length mismatch".into()));
    }
    for ((name, t, _), entry) in slots.into_iter().zip(&m.tensors) {
        if name != entry.name || t.shape != entry.shape {
            return Err(Error::CorruptCheckpoint(format!(
                "tensor {} {:?} does not match expected {name} {:?}",
                entry.name, entry.shape, t.shape
            )));
        }
        for v in &mut t.data {
            *v = values[cursor] as f64;
            cursor += 1;
        }
    }
    Ok((m.cfg, params))
}

/// Read a checkpoint and require that it was written for `cfg`.
pub fn load_params(dir: impl AsRef<Path>, cfg: &ModelConfig) -> Result<ModelParams> {
    let (stored, params) = load_checkpoint(dir)?;
    if stored.hash() != cfg.hash() {
        return Err(Error::ConfigMismatch {
            expected: cfg.hash(),
            found: stored.hash(),
        });
    }
    Ok(params)
}
