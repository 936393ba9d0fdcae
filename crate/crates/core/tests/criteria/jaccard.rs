//! Word-set Jaccard: closed cases, symmetry and bounds on random strings,
//! and exact agreement of the overall mean with the count-weighted
//! per-language means.

use std::collections::{BTreeMap, BTreeSet};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use xlqa_core::eval::{jaccard, RecordScore};
use xlqa_core::JaccardReport;

use super::Outcome;

/// Sorted-set reference, independent of the library's hashing path.
fn oracle(a: &str, b: &str) -> BigRational {
    let x: BTreeSet<&str> = a.split_whitespace().collect();
    let y: BTreeSet<&str> = b.split_whitespace().collect();
    if x.is_empty() && y.is_empty() {
        return BigRational::from_integer(BigInt::from(1));
    }
    let inter = x.iter().filter(|w| y.contains(*w)).count();
    let union = x.len() + y.len() - inter;
    BigRational::new(BigInt::from(inter), BigInt::from(union))
}

fn random_text(r: &mut ChaCha8Rng) -> String {
    let words = ["the", "cat", "sat", "on", "mat", "a", "கை", "नम", "ten"];
    (0..r.random_range(0..7)).map(|_| words[r.random_range(0..words.len())]).collect::<Vec<_>>().join(" ")
}

pub fn run() -> Outcome {
    let mut failures = Vec::new();
    let example = jaccard("the cat sat", "cat sat on");
    if example != 0.5 {
        failures.push(format!("example gave {example}"));
    }

    let mut r = ChaCha8Rng::seed_from_u64(23);
    for _ in 0..2000 {
        let (a, b) = (random_text(&mut r), random_text(&mut r));
        let (ab, ba) = (jaccard(&a, &b), jaccard(&b, &a));
        let expected = oracle(&a, &b).to_f64().unwrap();
        if ab != ba || !(0.0..=1.0).contains(&ab) || jaccard(&a, &a) != 1.0 || ab != expected {
            failures.push(format!("{a:?} vs {b:?}: {ab} / {ba} / oracle {expected}"));
            break;
        }
    }

    let mut worst = String::from("exact");
    for trial in 0..50u64 {
        let mut r = ChaCha8Rng::seed_from_u64(100 + trial);
        let langs = ["hi", "ta", "mr", "ml", "te"];
        let n = r.random_range(1..60);
        let mut scores = BTreeMap::new();
        let mut oracle_sum = BigRational::zero();
        for i in 0..n {
            let k = r.random_range(1..=langs.len());
            let lang = langs[r.random_range(0..k)];
            let (gold, pred) = (random_text(&mut r), random_text(&mut r));
            oracle_sum += oracle(&pred, &gold);
            scores.insert(format!("{i:03}"), RecordScore::new(lang, &gold, &pred));
        }
        let report = JaccardReport::from_scores(scores).unwrap();
        let oracle_mean = oracle_sum / BigInt::from(n);
        let exact = report.exact_overall();
        if exact != report.exact_weighted_language_mean() || exact != oracle_mean {
            failures
                .push(format!("trial {trial}: overall {exact} vs weighted {}", report.exact_weighted_language_mean()));
        }
        if report.overall != oracle_mean.to_f64().unwrap() {
            worst = format!("trial {trial}: float overall {} vs {}", report.overall, oracle_mean.to_f64().unwrap());
            failures.push(worst.clone());
        }
    }

    if failures.is_empty() {
        Outcome::check(
            true,
            format!("J(\"the cat sat\", \"cat sat on\") = {example}; 2000 random pairs symmetric, bounded, reflexive, oracle-equal; 50 reports: overall == weighted language mean ({worst})"),
        )
    } else {
        failures.truncate(4);
        Outcome::check(false, failures.join("; "))
    }
}
