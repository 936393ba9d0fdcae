//! Desk-scale pipeline experiments on two pseudo-language families.
//!
//! (a) Pretraining the QA head on a large source-language set, then
//! fine-tuning briefly on a few target-language records, against the same
//! fine-tuning from random initialization.
//! (b) Training on target records plus cross-family translations with and
//! without the contrastive term, comparing pooled tap-layer embeddings of
//! held-out translation pairs.

use std::collections::BTreeMap;
use std::time::Instant;

use xlqa_core::augment::group_records;
use xlqa_core::encoder::{self, EncoderParams};
use xlqa_core::features::build_features;
use xlqa_core::synthetic::{SyntheticConfig, World};
use xlqa_core::trainer::{pretrain_qa_head, train, RunOptions, TrainConfig, TrainData};
use xlqa_core::{eval, DecodeConfig, EncoderConfig, FeatureConfig, QaRecord, Vocab};

use super::support::{translate, vocab_for};
use super::Outcome;

const SEEDS: [u64; 5] = [0, 1, 2, 3, 4];
const NEEDED: usize = 4;
const BUDGET_SECS: f64 = 1200.0;

const SOURCE_RECORDS: usize = 2000;
const TARGET_RECORDS: usize = 32;
const HELD_OUT: usize = 100;
const PRETRAIN_STEPS: u64 = 300;
const FINETUNE_STEPS: u64 = 8;
const ALIGN_STEPS: u64 = 100;
const ALIGN_WEIGHT: f64 = 0.5;

struct Setup {
    world: World,
    source: Vec<QaRecord>,
    target: Vec<QaRecord>,
    held: Vec<QaRecord>,
    vocab: Vocab,
    enc: EncoderConfig,
    feature_cfg: FeatureConfig,
    base: TrainConfig,
}

fn setup(seed: u64) -> Setup {
    let world = World::standard(SyntheticConfig { facts_per_context: 1, ..Default::default() }, seed);
    let source = world.generate("en", SOURCE_RECORDS, seed, "en");
    let target = world.generate("hi", TARGET_RECORDS, seed, "hi");
    let held = world.generate("hi", HELD_OUT, seed + 1000, "ho");
    let translated = translate(&world, &target, "ta");
    let held_ta = translate(&world, &held, "ta");
    let vocab = vocab_for([source.as_slice(), &target, &held, &translated, &held_ta], 1000);
    let enc = EncoderConfig {
        vocab_size: vocab.len(),
        max_positions: 64,
        d_model: 32,
        n_layers: 3,
        n_heads: 4,
        d_ffn: 128,
        tap_layer: 2,
        ..Default::default()
    };
    let base = TrainConfig {
        seed,
        tap_layer: 2,
        learning_rate: 1e-3,
        clip_grad_norm: Some(1.0),
        w_contrastive: 0.0,
        eval_interval: 1_000_000,
        ..Default::default()
    };
    Setup {
        world,
        source,
        target,
        held,
        vocab,
        enc,
        feature_cfg: FeatureConfig { max_length: 24, doc_stride: 8 },
        base,
    }
}

fn data<'a>(s: &'a Setup, train: &'a [QaRecord]) -> TrainData<'a> {
    TrainData {
        train,
        validation: &[],
        vocab: &s.vocab,
        feature_cfg: s.feature_cfg,
        decode_cfg: DecodeConfig::default(),
    }
}

fn held_jaccard(s: &Setup, params: &EncoderParams) -> f64 {
    eval::evaluate(params, &s.enc, &s.held, &s.vocab, &s.feature_cfg, &DecodeConfig::default()).unwrap().overall
}

/// Returns (pretrained, random) held-out Jaccard.
fn pretraining_arm(s: &Setup) -> (f64, f64) {
    let pre_cfg = TrainConfig { max_steps: PRETRAIN_STEPS, ..s.base };
    let pre = pretrain_qa_head(&data(s, &s.source), &s.enc, &pre_cfg, RunOptions::default()).unwrap();
    let ft = TrainConfig { max_steps: FINETUNE_STEPS, ..s.base };
    let warm = train(
        &data(s, &s.target),
        &BTreeMap::new(),
        &s.enc,
        &ft,
        RunOptions { init: Some(pre.state.params), ..Default::default() },
    )
    .unwrap();
    let cold = train(&data(s, &s.target), &BTreeMap::new(), &s.enc, &ft, RunOptions::default()).unwrap();
    (held_jaccard(s, &warm.state.params), held_jaccard(s, &cold.state.params))
}

fn pooled(s: &Setup, params: &EncoderParams, records: &[QaRecord]) -> Vec<Vec<f64>> {
    let feats: Vec<_> =
        records.iter().map(|r| build_features(r, &s.vocab, &s.feature_cfg).unwrap().swap_remove(0)).collect();
    let out = encoder::forward(params, &s.enc, &feats).unwrap();
    let g = encoder::gap(&out.tapped, &out.mask).unwrap();
    g.rows().into_iter().map(|r| r.to_vec()).collect()
}

fn cosine_distance(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|x| x * x).sum::<f64>().sqrt();
    1.0 - dot / (na * nb)
}

/// Mean cross-family distance over translation pairs, and the same
/// divided by the mean over mismatched cross-family pairs.
fn alignment(s: &Setup, params: &EncoderParams) -> (f64, f64) {
    let held_ta = translate(&s.world, &s.held, "ta");
    let a = pooled(s, params, &s.held);
    let b = pooled(s, params, &held_ta);
    let n = a.len();
    let paired = (0..n).map(|i| cosine_distance(&a[i], &b[i])).sum::<f64>() / n as f64;
    let mut other = 0.0;
    for (i, x) in a.iter().enumerate() {
        for (j, y) in b.iter().enumerate() {
            if i != j {
                other += cosine_distance(x, y);
            }
        }
    }
    other /= (n * (n - 1)) as f64;
    (paired, paired / other)
}

/// Returns ((distance, ratio) with contrastive, (distance, ratio) without).
fn contrastive_arm(s: &Setup) -> ((f64, f64), (f64, f64)) {
    let mut train_set = s.target.clone();
    train_set.extend(translate(&s.world, &s.target, "ta"));
    let groups = group_records(&train_set);
    let on = TrainConfig {
        max_steps: ALIGN_STEPS,
        w_contrastive: ALIGN_WEIGHT,
        contrastive_interval: 1,
        max_contrastive_steps: ALIGN_STEPS,
        ..s.base
    };
    let off = TrainConfig { w_contrastive: 0.0, ..on };
    let with = train(&data(s, &train_set), &groups, &s.enc, &on, RunOptions::default()).unwrap();
    let without = train(&data(s, &train_set), &groups, &s.enc, &off, RunOptions::default()).unwrap();
    (alignment(s, &with.state.params), alignment(s, &without.state.params))
}

pub fn run() -> Outcome {
    let t = Instant::now();
    let (mut wins_a, mut wins_b) = (0, 0);
    let mut lines = Vec::new();
    for seed in SEEDS {
        let s = setup(seed);
        let (warm, cold) = pretraining_arm(&s);
        let ((d_on, r_on), (d_off, r_off)) = contrastive_arm(&s);
        wins_a += usize::from(warm > cold);
        wins_b += usize::from(d_on < d_off);
        lines.push(format!(
            "seed {seed}: J pretrained {warm:.3} random {cold:.3}; distance w>0 {d_on:.4} w=0 {d_off:.4} (pair/non-pair {r_on:.3} vs {r_off:.3})"
        ));
    }
    let secs = t.elapsed().as_secs_f64();
    Outcome::check(
        wins_a >= NEEDED && wins_b >= NEEDED && secs < BUDGET_SECS,
        format!(
            "(a) pretraining wins {wins_a}/5, (b) contrastive lowers distance {wins_b}/5, need {NEEDED}/5 each, {secs:.0}s of {BUDGET_SECS}s\n    {}",
            lines.join("\n    ")
        ),
    )
}
