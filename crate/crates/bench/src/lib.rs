//! Shared inputs for the benchmarks.

use xlqa_core::synthetic::{SyntheticConfig, World};
use xlqa_core::tokenizer::build_vocab;
use xlqa_core::{QaRecord, Vocab};

/// Records with long contexts (many facts) in one pseudo-language, and a
/// vocabulary induced from them.
pub fn corpus(n: usize, facts: usize) -> (Vec<QaRecord>, Vocab) {
    let world = World::standard(
        SyntheticConfig {
            facts_per_context: facts,
            entities: facts.max(40),
            values: (100, 100 + facts.max(60)),
            max_filler_run: 3,
            ..Default::default()
        },
        0,
    );
    let records = world.generate("hi", n, 0, "b");
    let text: Vec<&str> = records.iter().flat_map(|r| [r.context.as_str(), r.question.as_str()]).collect();
    let vocab = build_vocab(&text, 2000).expect("vocabulary");
    (records, vocab)
}
