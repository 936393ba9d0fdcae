//! Small builders shared by the criteria.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use xlqa_core::encoder::{EncoderConfig, EncoderParams};
use xlqa_core::Feature;

/// Hand-made feature: `[question | context]` split at `split`, pads after `active`.
pub fn feature(id: &str, ids: &[u32], t: usize, split: usize, labels: (usize, usize)) -> Feature {
    let active = ids.len();
    let mut all = ids.to_vec();
    all.resize(t, 0);
    let mut segment_ids = vec![0u8; t];
    segment_ids[split..active].fill(1);
    let mut attention_mask = vec![0u8; t];
    attention_mask[..active].fill(1);
    let offsets = (0..t).map(|p| (p >= split && p + 1 < active).then_some((p, p + 1))).collect();
    Feature {
        record_id: id.to_string(),
        ids: all,
        attention_mask,
        segment_ids,
        offsets,
        start_label: labels.0,
        end_label: labels.1,
        window_start: 0,
    }
}

/// Random features with varying active lengths and valid labels.
pub fn random_batch(rng: &mut ChaCha8Rng, n: usize, t: usize, vocab: usize, prefix: &str) -> Vec<Feature> {
    (0..n)
        .map(|i| {
            let active = rng.random_range(t / 2 + 1..=t);
            let split = 2;
            let ids: Vec<u32> = (0..active).map(|_| rng.random_range(1..vocab as u32)).collect();
            let s = rng.random_range(split..active);
            let e = rng.random_range(s..active);
            feature(&format!("{prefix}{i}"), &ids, t, split, (s, e))
        })
        .collect()
}

/// Parameters drawn from N(0, std²) so every nonlinearity is exercised.
pub fn random_params(cfg: &EncoderConfig, seed: u64, std: f64) -> EncoderParams {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = Normal::new(0.0, std).unwrap();
    let specs = EncoderParams::specs(cfg);
    EncoderParams::from_flat(
        cfg,
        specs.iter().map(|s| (0..s.numel()).map(|_| normal.sample(&mut rng)).collect::<Vec<f64>>()),
    )
}

use xlqa_core::augment::{augment_record, variant_id};
use xlqa_core::synthetic::World;
use xlqa_core::tokenizer::build_vocab;
use xlqa_core::{QaRecord, Vocab};

/// Word-for-word translations of `records` into `target`, ids marked as variants.
pub fn translate(world: &World, records: &[QaRecord], target: &str) -> Vec<QaRecord> {
    let dict = world.dictionary(&records[0].language, target);
    records
        .iter()
        .map(|r| {
            let mut t = augment_record(r, &dict).unwrap().kept().expect("dictionary translation keeps answers");
            t.id = variant_id(&r.id, target);
            t
        })
        .collect()
}

pub fn vocab_for<'a>(sets: impl IntoIterator<Item = &'a [QaRecord]>, size: usize) -> Vocab {
    let corpus: Vec<&str> =
        sets.into_iter().flat_map(|s| s.iter().flat_map(|r| [r.context.as_str(), r.question.as_str()])).collect();
    build_vocab(&corpus, size).unwrap()
}
