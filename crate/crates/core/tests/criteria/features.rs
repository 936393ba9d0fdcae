//! Randomized window geometry: coverage, exact overlap, label soundness,
//! and rejection of strides that leave no forward progress.

use proptest::prelude::*;
use proptest::test_runner::{Config, TestCaseError, TestRunner};
use xlqa_core::features::{build_features, FeatureError, MIN_QUESTION_BUDGET};
use xlqa_core::tokenizer::tokenize;
use xlqa_core::{FeatureConfig, QaRecord, Vocab};

use super::Outcome;

const CASES: u32 = 1000;

fn vocab() -> Vocab {
    let letters = ["a", "b", "c", "d", "e"];
    let mut pieces: Vec<String> = letters.iter().map(|s| s.to_string()).collect();
    pieces.extend(letters.iter().map(|s| format!("##{s}")));
    pieces.extend(["ab", "##cd", "de", "##ea"].map(String::from));
    Vocab::from_pieces(pieces)
}

#[derive(Debug, Clone)]
struct Case {
    context: Vec<String>,
    question: Vec<String>,
    answer: (usize, usize),
    max_length: usize,
    stride: usize,
}

fn case() -> impl Strategy<Value = Case> {
    let word = "[a-e]{1,6}";
    (prop::collection::vec(word, 1..60), prop::collection::vec(word, 1..4), 16usize..64)
        .prop_flat_map(|(context, question, max_length)| {
            let n = context.len();
            (
                Just(context),
                Just(question),
                (0..n).prop_flat_map(move |a| (Just(a), a..n.min(a + 3))),
                Just(max_length),
                0..max_length,
            )
        })
        .prop_map(|(context, question, answer, max_length, stride)| Case {
            context,
            question,
            answer,
            max_length,
            stride,
        })
}

fn check(case: &Case, vocab: &Vocab) -> Result<&'static str, TestCaseError> {
    let context = case.context.join(" ");
    let start: usize = case.context[..case.answer.0].iter().map(|w| w.chars().count() + 1).sum();
    let answer_text = case.context[case.answer.0..=case.answer.1].join(" ");
    let record = QaRecord {
        id: "p".into(),
        context: context.clone(),
        question: case.question.join(" "),
        answer_text: answer_text.clone(),
        answer_start: start,
        language: "xx".into(),
    };
    let cfg = FeatureConfig { max_length: case.max_length, doc_stride: case.stride };
    let q_len = tokenize(vocab, &record.question).len();
    let c_enc = tokenize(vocab, &context);
    let n = c_enc.len();
    let result = build_features(&record, vocab, &cfg);
    // The config alone is checked before any record is looked at.
    if case.stride >= case.max_length - MIN_QUESTION_BUDGET {
        let rejected =
            matches!(result, Err(FeatureError::StrideGeqCapacity { .. }) | Err(FeatureError::InvalidConfig(_)));
        prop_assert!(rejected, "stride {} with max_length {} accepted", case.stride, case.max_length);
        return Ok("rejected");
    }
    if q_len + 3 >= case.max_length {
        let too_long = matches!(result, Err(FeatureError::QuestionTooLong { .. }));
        prop_assert!(too_long, "question of {} tokens accepted", q_len);
        return Ok("question");
    }
    let capacity = case.max_length - q_len - 3;
    if case.stride >= capacity {
        let rejected =
            matches!(result, Err(FeatureError::StrideGeqCapacity { .. }) | Err(FeatureError::InvalidConfig(_)));
        prop_assert!(rejected, "stride {} >= capacity {} accepted", case.stride, capacity);
        return Ok("rejected");
    }
    let feats = match result {
        Ok(f) => f,
        Err(FeatureError::InvalidConfig(_)) => {
            prop_assert!(cfg.validate().is_err());
            return Ok("rejected");
        }
        Err(e) => return Err(TestCaseError::fail(format!("unexpected error {e}"))),
    };

    // Coverage and overlap over context token indices.
    let spans: Vec<(usize, usize)> = feats
        .iter()
        .map(|f| (f.window_start, f.window_start + f.offsets.iter().filter(|o| o.is_some()).count()))
        .collect();
    prop_assert_eq!(spans[0].0, 0);
    prop_assert_eq!(spans.last().unwrap().1, n);
    for w in spans.windows(2) {
        prop_assert_eq!(w[0].1 - w[1].0, case.stride, "windows {:?}", spans);
        prop_assert_eq!(w[0].1 - w[0].0, capacity);
    }
    for f in &feats {
        prop_assert_eq!(f.ids.len(), case.max_length);
        for (k, off) in f.offsets.iter().enumerate() {
            if let Some(o) = off {
                prop_assert_eq!(*o, c_enc.offsets[f.window_start + k - (q_len + 2)]);
            }
        }
    }

    // Labels: every positive window decodes to a superset of the gold span.
    let gold = (start, start + answer_text.chars().count());
    let mut positives = 0;
    for f in &feats {
        if f.has_answer() {
            positives += 1;
            let (s, e) = (f.offsets[f.start_label].unwrap(), f.offsets[f.end_label].unwrap());
            prop_assert!(s.0 <= gold.0 && e.1 >= gold.1, "label span {:?}..{:?} misses {:?}", s, e, gold);
            prop_assert!(f.start_label <= f.end_label);
        } else {
            prop_assert_eq!((f.start_label, f.end_label), (0, 0));
        }
    }
    let a_tokens = c_enc.offsets.iter().filter(|&&(s, e)| s < gold.1 && e > gold.0).count();
    if a_tokens <= case.stride.max(1) {
        prop_assert!(positives > 0, "answer of {} tokens fits the overlap but no window holds it", a_tokens);
    }
    Ok("windowed")
}

pub fn run() -> Outcome {
    let vocab = vocab();
    let mut runner = TestRunner::new(Config { cases: CASES, failure_persistence: None, ..Config::default() });
    let counts = std::cell::RefCell::new(std::collections::BTreeMap::<&str, usize>::new());
    let result = runner.run(&case(), |c| {
        let kind = check(&c, &vocab)?;
        *counts.borrow_mut().entry(kind).or_default() += 1;
        Ok(())
    });
    match result {
        Ok(()) => Outcome::check(true, format!("{CASES} cases: {:?}", counts.borrow())),
        Err(e) => Outcome::check(false, format!("{e}")),
    }
}
