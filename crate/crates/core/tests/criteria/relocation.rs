//! Answer relocation under identity, reversible, and forced-mismatch adapters.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlqa_core::augment::{
    augment_record, build_groups, pivot_chain, relocate_answer, AugmentPlan, Augmented, CharMap, Field, FnTransformer,
    Identity, TextTransformer, TransformKind,
};
use xlqa_core::corpus::char_slice;
use xlqa_core::synthetic::{SyntheticConfig, World};
use xlqa_core::QaRecord;

use super::Outcome;

/// Random records over a tiny word list, so answers often repeat.
fn repetitive_records(n: usize) -> Vec<QaRecord> {
    let words = ["ka", "ma", "na", "kana", "ama", "न", "नम", "மா"];
    let mut r = ChaCha8Rng::seed_from_u64(17);
    (0..n)
        .map(|i| {
            let len = r.random_range(1..12);
            let ctx: Vec<&str> = (0..len).map(|_| words[r.random_range(0..words.len())]).collect();
            let a = r.random_range(0..len);
            let b = r.random_range(a..len.min(a + 3));
            let start: usize = ctx[..a].iter().map(|w| w.chars().count() + 1).sum();
            QaRecord {
                id: format!("r{i}"),
                context: ctx.join(" "),
                question: "q".into(),
                answer_text: ctx[a..=b].join(" "),
                answer_start: start,
                language: "xx".into(),
            }
        })
        .collect()
}

pub fn run() -> Outcome {
    let world = World::standard(SyntheticConfig::default(), 9);
    let mut records: Vec<QaRecord> =
        ["en", "hi", "mr", "ta", "ml"].iter().flat_map(|l| world.generate(l, 100, 9, &format!("{l}-"))).collect();
    records.extend(repetitive_records(500));
    let mut failures = Vec::new();

    // Identity: start preserved whenever the gold span is the first occurrence.
    let mut eligible = 0;
    let mut preserved = 0;
    let mut moved_to_first = 0;
    for r in &records {
        r.check().unwrap();
        let t = Identity::new(TransformKind::Translation, &r.language, "id");
        let kept = augment_record(r, &t).unwrap().kept().expect("identity never drops");
        let first = relocate_answer(&r.context, &r.answer_text).unwrap();
        if first == r.answer_start {
            eligible += 1;
            preserved += usize::from(kept.answer_start == r.answer_start);
        } else {
            moved_to_first += usize::from(kept.answer_start == first);
        }
        kept.check().unwrap();
    }
    if preserved != eligible {
        failures.push(format!("identity preserved {preserved}/{eligible}"));
    }

    // Reversible adapters: a round trip restores the context text exactly.
    let shift = CharMap::shift("hi", "hi-lat", '\u{0900}'..='\u{097F}', 0x0D00 - 0x0900);
    let shift_back = shift.inverse();
    let dict = world.dictionary("hi", "ta");
    let dict_back = dict.inverse();
    let mut round_trips = 0;
    for r in records.iter().filter(|r| r.language == "hi") {
        for (there, back) in
            [(&shift as &dyn TextTransformer, &shift_back as &dyn TextTransformer), (&dict, &dict_back)]
        {
            match pivot_chain(r, &[there, back]).unwrap() {
                Augmented::Kept(b) if b.context == r.context && b.answer_start == r.answer_start => round_trips += 1,
                other => failures.push(format!("{} round trip: {other:?}", r.id)),
            }
        }
        let t = augment_record(r, &shift).unwrap().kept().unwrap();
        if t.context.split_whitespace().count() != r.context.split_whitespace().count() {
            failures.push(format!("{} transliteration changed word count", r.id));
        }
    }

    // Forced mismatch: the answer is rewritten for every third record only.
    let breaker =
        FnTransformer::new(TransformKind::Translation, "*", "zz", |req: &xlqa_core::augment::TransformRequest<'_>| {
            let odd = req.record_id.bytes().map(u32::from).sum::<u32>() % 3 == 0;
            match req.field {
                Field::Answer if odd => format!("{}#", req.text),
                _ => req.text.to_string(),
            }
        });
    let plans = vec![
        AugmentPlan { target: "zz".into(), kind: TransformKind::Translation, chain: vec![Arc::new(breaker)] },
        AugmentPlan {
            target: "id".into(),
            kind: TransformKind::Translation,
            chain: vec![Arc::new(Identity::new(TransformKind::Translation, "*", "id"))],
        },
    ];
    let (groups, report) = build_groups(&records, &plans).unwrap();
    let totals = report.totals();
    let conserved = report.cells.values().all(|c| c.attempted == c.succeeded + c.dropped)
        && totals.attempted == totals.succeeded + totals.dropped
        && totals.attempted == 2 * records.len();
    let zz = &report.cells[&("zz".to_string(), TransformKind::Translation)];
    if !conserved || zz.dropped == 0 || zz.succeeded == 0 || report.drop_reasons.len() != totals.dropped {
        failures.push(format!("report {totals:?}, zz {zz:?}"));
    }
    for g in &groups {
        for v in g.variants.values() {
            if v.check().is_err()
                || char_slice(&v.context, v.answer_start, v.answer_end()) != Some(v.answer_text.as_str())
            {
                failures.push(format!("invalid variant {}", v.id));
            }
        }
    }

    if failures.is_empty() {
        Outcome::check(
            true,
            format!(
                "identity kept start on {preserved}/{eligible} first-occurrence records ({moved_to_first} repeats moved to the first occurrence); {round_trips} exact round trips; forced mismatch: {} attempted = {} kept + {} dropped",
                totals.attempted, totals.succeeded, totals.dropped
            ),
        )
    } else {
        failures.truncate(5);
        Outcome::check(false, failures.join("; "))
    }
}
