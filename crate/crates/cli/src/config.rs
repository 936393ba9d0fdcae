//! Flat `key = value` run configuration.
//!
//! Blank lines and anything after `#` are ignored. A later assignment of
//! the same key wins, so command-line `--set` overrides are applied after
//! the file.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use xlqa_core::{DecodeConfig, EncoderConfig, FeatureConfig, TrainConfig};

use crate::error::CliError;

/// Every accepted key with its help line, in the order `--help` lists them.
pub const KEYS: &[(&str, &str)] = &[
    ("train", "training records, .jsonl or .csv (required)"),
    ("validation", "validation records; without it the final step is kept"),
    ("out_dir", "run directory for logs and ckpt-<step> checkpoints (required)"),
    ("init_checkpoint", "checkpoint or run directory to start from; its vocabulary and encoder shape are reused"),
    ("vocab", "vocabulary file, one piece per line; built from the training text when unset"),
    ("vocab_size", "size bound when the vocabulary is built [8000]"),
    ("d_model", "hidden width [64]"),
    ("n_layers", "transformer blocks [4]"),
    ("n_heads", "attention heads; must divide d_model [4]"),
    ("d_ffn", "feed-forward width [256]"),
    ("max_positions", "position embedding rows; at least max_length [512]"),
    ("layer_norm_eps", "layer norm epsilon [1e-5]"),
    ("max_length", "tokens per feature window [384]"),
    ("doc_stride", "context tokens shared by consecutive windows [128]"),
    ("n_best", "start/end candidates considered when decoding [20]"),
    ("max_answer_tokens", "longest decoded span in tokens [30]"),
    ("batch_size", "features per step [16]"),
    ("max_steps", "optimizer steps [5000]"),
    ("learning_rate", "AdamW learning rate [3e-5]"),
    ("weight_decay", "AdamW decoupled weight decay [0.01]"),
    ("w_contrastive", "weight of the contrastive term; 0 disables it [0.05]"),
    ("contrastive_interval", "apply the contrastive term every this many steps [500]"),
    ("max_contrastive_steps", "no contrastive term after this step [1000]"),
    ("tap_layer", "block, counted from 1, whose output is pooled for the contrastive term [3]"),
    ("eval_interval", "validate and checkpoint every this many steps [500]"),
    ("seed", "seed for initialization, batch order and pair sampling [0]"),
    ("clip_grad_norm", "global gradient norm bound, or none [none]"),
    ("drop_negative_windows", "train only on windows holding the answer, true or false [false]"),
];

pub fn keys_help() -> String {
    let width = KEYS.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
    let mut out = String::from("Configuration keys (file lines `key = value`, or --set key=value):\n");
    for (k, h) in KEYS {
        let _ = writeln!(out, "  {k:width$}  {h}");
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub validation: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    pub init_checkpoint: Option<PathBuf>,
    pub vocab: Option<PathBuf>,
    pub vocab_size: usize,
    pub encoder: EncoderConfig,
    pub features: FeatureConfig,
    pub decode: DecodeConfig,
    pub training: TrainConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            train: None,
            validation: None,
            out_dir: None,
            init_checkpoint: None,
            vocab: None,
            vocab_size: 8000,
            encoder: EncoderConfig::default(),
            features: FeatureConfig::default(),
            decode: DecodeConfig::default(),
            training: TrainConfig::default(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, CliError> {
    value.parse().map_err(|_| CliError::usage(format!("{key}: cannot parse {value:?}")))
}

impl RunConfig {
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), CliError> {
        let v = value.trim();
        let path = || Some(PathBuf::from(v));
        let t = &mut self.training;
        let e = &mut self.encoder;
        match key.trim() {
            "train" => self.train = path(),
            "validation" => self.validation = path(),
            "out_dir" => self.out_dir = path(),
            "init_checkpoint" => self.init_checkpoint = path(),
            "vocab" => self.vocab = path(),
            "vocab_size" => self.vocab_size = parse(key, v)?,
            "d_model" => e.d_model = parse(key, v)?,
            "n_layers" => e.n_layers = parse(key, v)?,
            "n_heads" => e.n_heads = parse(key, v)?,
            "d_ffn" => e.d_ffn = parse(key, v)?,
            "max_positions" => e.max_positions = parse(key, v)?,
            "layer_norm_eps" => e.layer_norm_eps = parse(key, v)?,
            "max_length" => self.features.max_length = parse(key, v)?,
            "doc_stride" => self.features.doc_stride = parse(key, v)?,
            "n_best" => self.decode.n_best = parse(key, v)?,
            "max_answer_tokens" => self.decode.max_answer_tokens = parse(key, v)?,
            "batch_size" => t.batch_size = parse(key, v)?,
            "max_steps" => t.max_steps = parse(key, v)?,
            "learning_rate" => t.learning_rate = parse(key, v)?,
            "weight_decay" => t.weight_decay = parse(key, v)?,
            "w_contrastive" => t.w_contrastive = parse(key, v)?,
            "contrastive_interval" => t.contrastive_interval = parse(key, v)?,
            "max_contrastive_steps" => t.max_contrastive_steps = parse(key, v)?,
            "tap_layer" => {
                t.tap_layer = parse(key, v)?;
                e.tap_layer = t.tap_layer;
            }
            "eval_interval" => t.eval_interval = parse(key, v)?,
            "seed" => t.seed = parse(key, v)?,
            "clip_grad_norm" => {
                t.clip_grad_norm = match v {
                    "none" | "off" => None,
                    _ => Some(parse(key, v)?),
                }
            }
            "drop_negative_windows" => t.drop_negative_windows = parse(key, v)?,
            other => return Err(CliError::usage(format!("unknown configuration key {other:?}"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines; `origin` names the source in errors.
    pub fn apply_text(&mut self, text: &str, origin: &str) -> Result<(), CliError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| CliError::usage(format!("{origin}:{}: expected key = value", i + 1)))?;
            self.set(k, v).map_err(|e| CliError::usage(format!("{origin}:{}: {}", i + 1, e.message)))?;
        }
        Ok(())
    }

    pub fn load(config: Option<&Path>, overrides: &[String]) -> Result<Self, CliError> {
        let mut cfg = Self::default();
        if let Some(path) = config {
            let text = fs::read_to_string(path)
                .map_err(|e| CliError::usage(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_text(&text, &path.display().to_string())?;
        }
        for o in overrides {
            let (k, v) =
                o.split_once('=').ok_or_else(|| CliError::usage(format!("--set expects key=value, got {o:?}")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }

    /// Required keys are present and every referenced path exists.
    pub fn check_paths(&self) -> Result<(), CliError> {
        if self.train.is_none() {
            return Err(CliError::usage("configuration key train is required"));
        }
        if self.out_dir.is_none() {
            return Err(CliError::usage("configuration key out_dir is required"));
        }
        for p in [&self.train, &self.validation, &self.init_checkpoint, &self.vocab].into_iter().flatten() {
            if !p.exists() {
                return Err(CliError::usage(format!("{} does not exist", p.display())));
            }
        }
        Ok(())
    }
}
