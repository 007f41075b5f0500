//! Checkpoints: raw little-endian f32 parameter blob plus a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{NnError, Result};
use crate::nets::{Model, NetConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Sidecar {
    pub config_hash: String,
    pub config: NetConfig,
    pub seed: u64,
    pub epoch: usize,
    pub param_count: usize,
}

/// `<stem>.bin` and `<stem>.json` for a checkpoint stem.
pub fn paths(stem: &Path) -> (PathBuf, PathBuf) {
    (stem.with_extension("bin"), stem.with_extension("json"))
}

pub fn save(model: &Model, stem: &Path, seed: u64, epoch: usize) -> Result<Sidecar> {
    let (bin, json) = paths(stem);
    if let Some(dir) = bin.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    let mut blob = Vec::with_capacity(model.param_count() * 4);
    for p in model.params.iter() {
        for v in &p.value {
            blob.extend_from_slice(&v.to_le_bytes());
        }
    }
    fs::write(&bin, blob)?;
    let side = Sidecar {
        config_hash: model.config.hash(),
        config: model.config.clone(),
        seed,
        epoch,
        param_count: model.param_count(),
    };
    fs::write(&json, serde_json::to_string_pretty(&side)?)?;
    Ok(side)
}

pub fn read_sidecar(stem: &Path) -> Result<Sidecar> {
    let (_, json) = paths(stem);
    Ok(serde_json::from_str(&fs::read_to_string(json)?)?)
}

/// Load a checkpoint, verifying the stored hash against its config and,
/// when given, against `expected`.
pub fn load(stem: &Path, expected: Option<&NetConfig>) -> Result<(Model, Sidecar)> {
    let side = read_sidecar(stem)?;
    let actual = side.config.hash();
    if actual != side.config_hash {
        return Err(NnError::Checkpoint(format!(
            "config hash mismatch: sidecar {} vs recomputed {actual}",
            side.config_hash
        )));
    }
    if let Some(cfg) = expected {
        if cfg.hash() != actual {
            return Err(NnError::Checkpoint(
                "checkpoint was trained with a different configuration".into(),
            ));
        }
    }
    let mut model = Model::new(side.config.clone(), side.seed)?;
    let (bin, _) = paths(stem);
    let blob = fs::read(bin)?;
    if blob.len() != model.param_count() * 4 || side.param_count != model.param_count() {
        return Err(NnError::Checkpoint(format!(
            "blob holds {} bytes, model needs {}",
            blob.len(),
            model.param_count() * 4
        )));
    }
    let mut chunks = blob.chunks_exact(4);
    for p in model.params.iter_mut() {
        for v in p.value.iter_mut() {
            let c = chunks.next().expect("length checked");
            *v = f32::from_le_bytes([c[0], c[1], c[2], c[3]]);
        }
    }
    Ok((model, side))
}
