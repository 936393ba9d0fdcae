//! Weighted-loss bookkeeping and the contrastive gate under the default
//! schedule (interval 500, cap 1000, weight 0.05).

use std::collections::BTreeSet;

use xlqa_core::augment::group_records;
use xlqa_core::encoder::EncoderConfig;
use xlqa_core::synthetic::{SyntheticConfig, World};
use xlqa_core::trainer::{train, RunOptions, TrainConfig, TrainData};
use xlqa_core::{DecodeConfig, FeatureConfig};

use super::support::{translate, vocab_for};
use super::Outcome;

pub fn run() -> Outcome {
    let world = World::standard(SyntheticConfig::default(), 3);
    let hi = world.generate("hi", 24, 3, "q");
    let ta = translate(&world, &hi, "ta");
    let mut records = hi.clone();
    records.extend(ta.iter().cloned());
    let vocab = vocab_for([records.as_slice()], 300);
    let groups = group_records(&records);
    let enc = EncoderConfig {
        vocab_size: vocab.len(),
        d_model: 8,
        n_layers: 3,
        n_heads: 2,
        d_ffn: 16,
        max_positions: 32,
        ..Default::default()
    };
    let data = TrainData {
        train: &records,
        validation: &[],
        vocab: &vocab,
        feature_cfg: FeatureConfig { max_length: 32, doc_stride: 8 },
        decode_cfg: DecodeConfig::default(),
    };
    let cfg = TrainConfig { max_steps: 1000, ..TrainConfig::default() };
    let out = train(&data, &groups, &enc, &cfg, RunOptions::default()).unwrap();
    let log = &out.state.log;

    let mut failures = Vec::new();
    let mut gated = BTreeSet::new();
    for e in log {
        let expected = match e.l_contrastive {
            Some(lc) => {
                gated.insert(e.step);
                if lc <= 0.0 {
                    failures.push(format!("step {}: degenerate contrastive loss {lc}", e.step));
                }
                e.l_task + cfg.w_contrastive * lc
            }
            None => e.l_task,
        };
        if e.l_total - expected != 0.0 || e.l_task < 0.0 {
            failures.push(format!("step {}: l_total {} vs {}", e.step, e.l_total, expected));
        }
    }
    if log.len() != 1000 {
        failures.push(format!("{} log entries", log.len()));
    }
    if gated != BTreeSet::from([500, 1000]) {
        failures.push(format!("contrastive applied at {gated:?}"));
    }

    // A zero weight and a gate that never opens give the same trajectory.
    let short = TrainConfig { max_steps: 60, contrastive_interval: 20, max_contrastive_steps: 60, ..cfg };
    let zero_w =
        train(&data, &groups, &enc, &TrainConfig { w_contrastive: 0.0, ..short }, RunOptions::default()).unwrap();
    let closed =
        train(&data, &groups, &enc, &TrainConfig { max_contrastive_steps: 0, ..short }, RunOptions::default()).unwrap();
    if zero_w.state.params != closed.state.params || zero_w.state.log != closed.state.log {
        failures.push("w=0 and closed gate diverge".into());
    }
    if zero_w.state.log.iter().any(|e| e.l_contrastive.is_some()) {
        failures.push("w=0 run logged a contrastive term".into());
    }

    if failures.is_empty() {
        Outcome::check(
            true,
            format!(
                "1000 steps, l_total exact at every step, contrastive applied at {gated:?}; w=0 matches closed gate"
            ),
        )
    } else {
        Outcome::check(false, failures.join("; "))
    }
}
