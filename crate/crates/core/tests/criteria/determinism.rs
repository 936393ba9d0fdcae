//! Seeded runs repeat byte for byte, an interrupted run resumed from its
//! checkpoint matches the uninterrupted one, and a saved checkpoint
//! reproduces the forward pass bit for bit.

use std::fs;
use std::path::Path;

use xlqa_core::augment::group_records;
use xlqa_core::checkpoint::{list_checkpoints, Checkpoint};
use xlqa_core::encoder::{self, EncoderConfig, EncoderParams};
use xlqa_core::features::build_features;
use xlqa_core::synthetic::{SyntheticConfig, World};
use xlqa_core::trainer::{train, RunOptions, TrainConfig, TrainData, TrainOutcome, TRAIN_LOG};
use xlqa_core::{DecodeConfig, FeatureConfig, QaRecord, Vocab};

use super::support::{translate, vocab_for};
use super::Outcome;

fn bits(p: &EncoderParams) -> Vec<u64> {
    p.slices().iter().flat_map(|s| s.iter().map(|v| v.to_bits())).collect()
}

fn run_in(
    dir: &Path,
    records: &[QaRecord],
    vocab: &Vocab,
    enc: &EncoderConfig,
    cfg: &TrainConfig,
    resume: bool,
    stop_after: Option<u64>,
) -> TrainOutcome {
    let data = TrainData {
        train: records,
        validation: &records[..12],
        vocab,
        feature_cfg: data_cfg(),
        decode_cfg: DecodeConfig::default(),
    };
    let opts = RunOptions { out_dir: Some(dir.to_path_buf()), resume, stop_after, ..Default::default() };
    train(&data, &group_records(records), enc, cfg, opts).expect("training runs")
}

pub fn run() -> Outcome {
    let world = World::standard(SyntheticConfig::default(), 9);
    let hi = world.generate("hi", 20, 9, "d");
    let mut records = hi.clone();
    records.extend(translate(&world, &hi, "ta"));
    records.extend(translate(&world, &hi, "ml"));
    let vocab = vocab_for([records.as_slice()], 300);
    let enc = EncoderConfig {
        vocab_size: vocab.len(),
        d_model: 16,
        n_layers: 2,
        n_heads: 2,
        d_ffn: 32,
        max_positions: 32,
        tap_layer: 1,
        ..Default::default()
    };
    let cfg = TrainConfig {
        seed: 11,
        max_steps: 40,
        batch_size: 8,
        learning_rate: 1e-3,
        eval_interval: 10,
        contrastive_interval: 3,
        max_contrastive_steps: 40,
        tap_layer: 1,
        clip_grad_norm: Some(1.0),
        ..Default::default()
    };
    let root = tempfile::tempdir().unwrap();
    let (a_dir, b_dir, c_dir) = (root.path().join("a"), root.path().join("b"), root.path().join("c"));
    let a = run_in(&a_dir, &records, &vocab, &enc, &cfg, false, None);
    let b = run_in(&b_dir, &records, &vocab, &enc, &cfg, false, None);
    run_in(&c_dir, &records, &vocab, &enc, &cfg, false, Some(20));
    let c = run_in(&c_dir, &records, &vocab, &enc, &cfg, true, None);

    let log = |d: &Path| fs::read(d.join(TRAIN_LOG)).unwrap();
    let mut failures = Vec::new();
    let log_a = log(&a_dir);
    if log_a != log(&b_dir) {
        failures.push("repeated run wrote a different train log".to_string());
    }
    if bits(&a.state.params) != bits(&b.state.params) {
        failures.push("repeated run ended with different parameters".to_string());
    }
    if log_a != log(&c_dir) {
        failures.push("resumed run wrote a different train log".to_string());
    }
    if bits(&a.state.params) != bits(&c.state.params) {
        failures.push("resumed run ended with different parameters".to_string());
    }
    let gated = a.state.log.iter().filter(|e| e.l_contrastive.is_some()).count();

    let checkpoints = list_checkpoints(&a_dir).unwrap();
    let (step, dir) = checkpoints.last().expect("checkpoints written").clone();
    let loaded = Checkpoint::load(&dir).unwrap();
    let feats: Vec<_> = records.iter().flat_map(|r| build_features(r, &vocab, &data_cfg()).unwrap()).collect();
    let live = encoder::forward(&a.state.params, &enc, &feats).unwrap();
    let restored = encoder::forward(&loaded.params, &loaded.config, &feats).unwrap();
    let same =
        |x: &ndarray::Array2<f64>, y: &ndarray::Array2<f64>| x.iter().zip(y).all(|(p, q)| p.to_bits() == q.to_bits());
    if step != cfg.max_steps
        || !same(&live.start_logits, &restored.start_logits)
        || !same(&live.end_logits, &restored.end_logits)
        || !live.tapped.iter().zip(&restored.tapped).all(|(p, q)| p.to_bits() == q.to_bits())
    {
        failures.push(format!("checkpoint at step {step} does not reproduce the forward pass"));
    }

    if failures.is_empty() {
        Outcome::check(
            true,
            format!(
                "{} log bytes identical across repeat and stop-at-20/resume ({} contrastive steps), params bit-equal, {} checkpoints, forward on {} features bit-equal after reload",
                log_a.len(),
                gated,
                checkpoints.len(),
                feats.len()
            ),
        )
    } else {
        Outcome::check(false, failures.join("; "))
    }
}

fn data_cfg() -> FeatureConfig {
    FeatureConfig { max_length: 32, doc_stride: 8 }
}
