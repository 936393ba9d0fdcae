//! Checkpoint directories.
//!
//! A checkpoint is a directory holding `manifest.json` (encoder config, seed,
//! step, and the name/shape/dtype of every tensor in order) and `params.bin`,
//! the tensors concatenated as little-endian `f64` in manifest order. When
//! optimizer state is saved, `optimizer.bin` holds the first moments followed
//! by the second moments in the same layout.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::encoder::{EncoderConfig, EncoderParams};
use crate::features::FeatureConfig;
use crate::optim::AdamState;

pub const MANIFEST: &str = "manifest.json";
pub const PARAMS_BLOB: &str = "params.bin";
pub const OPTIMIZER_BLOB: &str = "optimizer.bin";
pub const VOCAB_FILE: &str = "vocab.txt";
const DTYPE: &str = "f64";

#[derive(Debug, Error)]
pub enum CheckpointError {
    #[error("checkpoint {}: {source}", .path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("checkpoint manifest: {0}")]
    Manifest(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub shape: Vec<usize>,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub config: EncoderConfig,
    pub seed: u64,
    pub step: u64,
    pub tensors: Vec<TensorEntry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub optimizer_step: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feature_config: Option<FeatureConfig>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub config: EncoderConfig,
    pub params: EncoderParams,
    pub seed: u64,
    pub step: u64,
    pub optimizer: Option<AdamState>,
    pub feature_config: Option<FeatureConfig>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CheckpointError + '_ {
    move |source| CheckpointError::Io { path: path.to_path_buf(), source }
}

fn encode(params: &EncoderParams, out: &mut Vec<u8>) {
    for s in params.slices() {
        for v in s {
            out.extend_from_slice(&v.to_le_bytes());
        }
    }
}

fn decode(cfg: &EncoderConfig, bytes: &[u8]) -> Result<EncoderParams, CheckpointError> {
    let specs = EncoderParams::specs(cfg);
    let total: usize = specs.iter().map(|s| s.numel()).sum();
    if bytes.len() != total * 8 {
        return Err(CheckpointError::Manifest(format!(
            "blob holds {} bytes, manifest needs {}",
            bytes.len(),
            total * 8
        )));
    }
    let mut values = bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap()));
    Ok(EncoderParams::from_flat(cfg, specs.iter().map(|s| values.by_ref().take(s.numel()).collect::<Vec<_>>())))
}

impl Checkpoint {
    pub fn save(&self, dir: &Path) -> Result<(), CheckpointError> {
        fs::create_dir_all(dir).map_err(io_err(dir))?;
        let manifest = Manifest {
            config: self.config,
            seed: self.seed,
            step: self.step,
            tensors: EncoderParams::specs(&self.config)
                .into_iter()
                .map(|s| TensorEntry { name: s.name, shape: s.shape, dtype: DTYPE.into() })
                .collect(),
            optimizer_step: self.optimizer.as_ref().map(|o| o.step),
            feature_config: self.feature_config,
        };
        let mut text = serde_json::to_string_pretty(&manifest).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        text.push('\n');
        let path = dir.join(MANIFEST);
        fs::write(&path, text).map_err(io_err(&path))?;

        let mut blob = Vec::new();
        encode(&self.params, &mut blob);
        let path = dir.join(PARAMS_BLOB);
        fs::write(&path, &blob).map_err(io_err(&path))?;

        let path = dir.join(OPTIMIZER_BLOB);
        match &self.optimizer {
            Some(opt) => {
                blob.clear();
                encode(&opt.m, &mut blob);
                encode(&opt.v, &mut blob);
                fs::write(&path, &blob).map_err(io_err(&path))?;
            }
            None if path.exists() => fs::remove_file(&path).map_err(io_err(&path))?,
            None => {}
        }
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self, CheckpointError> {
        let path = dir.join(MANIFEST);
        let text = fs::read_to_string(&path).map_err(io_err(&path))?;
        let manifest: Manifest = serde_json::from_str(&text).map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let cfg = manifest.config;
        cfg.validate().map_err(|e| CheckpointError::Manifest(e.to_string()))?;
        let expected = EncoderParams::specs(&cfg);
        if manifest.tensors.len() != expected.len()
            || manifest
                .tensors
                .iter()
                .zip(&expected)
                .any(|(t, s)| t.name != s.name || t.shape != s.shape || t.dtype != DTYPE)
        {
            return Err(CheckpointError::Manifest("tensor table does not match the config".into()));
        }
        let path = dir.join(PARAMS_BLOB);
        let params = decode(&cfg, &fs::read(&path).map_err(io_err(&path))?)?;
        let optimizer = match manifest.optimizer_step {
            Some(step) => {
                let path = dir.join(OPTIMIZER_BLOB);
                let bytes = fs::read(&path).map_err(io_err(&path))?;
                let half = bytes.len() / 2;
                Some(AdamState { step, m: decode(&cfg, &bytes[..half])?, v: decode(&cfg, &bytes[half..])? })
            }
            None => None,
        };
        Ok(Self {
            config: cfg,
            params,
            seed: manifest.seed,
            step: manifest.step,
            optimizer,
            feature_config: manifest.feature_config,
        })
    }
}

/// `ckpt-{step}` directories under `dir`, sorted by step.
pub fn list_checkpoints(dir: &Path) -> std::io::Result<Vec<(u64, PathBuf)>> {
    let mut out = Vec::new();
    if !dir.exists() {
        return Ok(out);
    }
    for entry in fs::read_dir(dir)? {
        let entry = entry?;
        let name = entry.file_name();
        if let Some(step) = name.to_str().and_then(|n| n.strip_prefix("ckpt-")).and_then(|s| s.parse().ok()) {
            if entry.path().join(MANIFEST).exists() {
                out.push((step, entry.path()));
            }
        }
    }
    out.sort();
    Ok(out)
}

pub fn checkpoint_dir(root: &Path, step: u64) -> PathBuf {
    root.join(format!("ckpt-{step}"))
}
