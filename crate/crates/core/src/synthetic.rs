//! Synthetic QA corpora in pseudo-languages.
//!
//! A context is a run of facts `[filler] ENTITY RELATION VALUE [filler]`;
//! the question names one entity and the answer is its value. Entity names
//! and values are shared by every language. Function words come from a
//! per-language lexicon: languages of one family share a script and most of
//! their words, while different families share nothing but the entities and
//! values. Translating between languages is a word-for-word dictionary
//! lookup, so every record has an exact translation.

use std::collections::{BTreeMap, BTreeSet};

use rand::{Rng, RngCore};
use serde::{Deserialize, Serialize};

use crate::augment::WordDictionary;
use crate::corpus::QaRecord;
use crate::rng;

/// Concept slots: two question words, then relations, then fillers.
const QUESTION_WORDS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub facts_per_context: usize,
    pub entities: usize,
    pub relations: usize,
    pub fillers: usize,
    /// Up to this many filler words around each fact.
    pub max_filler_run: usize,
    /// Chance that a language rewrites a word inherited from its family.
    pub drift: f64,
    /// Values are integers in `values.0..values.1`.
    pub values: (usize, usize),
    /// Every entity keeps one value across all records and languages.
    pub fixed_values: bool,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            facts_per_context: 3,
            entities: 40,
            relations: 3,
            fillers: 16,
            max_filler_run: 1,
            drift: 0.2,
            values: (100, 160),
            fixed_values: false,
        }
    }
}

/// Letters a family writes its words with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Script {
    Latin,
    Devanagari,
    Malayalam,
}

impl Script {
    fn letters(self) -> Vec<char> {
        match self {
            Script::Latin => ('a'..='z').collect(),
            Script::Devanagari => ('\u{0915}'..='\u{0939}').collect(),
            Script::Malayalam => ('\u{0D15}'..='\u{0D28}').collect(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PseudoLanguage {
    pub code: String,
    pub family: String,
    /// Word for each concept slot.
    pub lexicon: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct World {
    pub config: SyntheticConfig,
    pub entities: Vec<String>,
    /// Value of each entity when `fixed_values` is set.
    pub entity_values: Vec<usize>,
    pub languages: BTreeMap<String, PseudoLanguage>,
}

fn random_word<R: RngCore>(rng: &mut R, letters: &[char], taken: &BTreeSet<String>) -> String {
    loop {
        let len = 3 + rng::index(rng, 3);
        let w: String = (0..len).map(|_| letters[rng::index(rng, letters.len())]).collect();
        if !taken.contains(&w) {
            return w;
        }
    }
}

impl World {
    /// `languages` lists `(code, family, script)`; families are created on
    /// first mention.
    pub fn new(config: SyntheticConfig, seed: u64, languages: &[(&str, &str, Script)]) -> Self {
        let concepts = QUESTION_WORDS + config.relations + config.fillers;
        let mut rng_e = rng::stream(seed, "synthetic-entities", 0);
        let upper: Vec<char> = ('A'..='Z').collect();
        let lower: Vec<char> = ('a'..='z').collect();
        let mut names = BTreeSet::new();
        let mut entities = Vec::with_capacity(config.entities);
        while entities.len() < config.entities {
            let tail = random_word(&mut rng_e, &lower, &BTreeSet::new());
            let name = format!("{}{}", upper[rng::index(&mut rng_e, upper.len())], tail);
            if names.insert(name.clone()) {
                entities.push(name);
            }
        }
        let mut pool: Vec<usize> = (config.values.0..config.values.1).collect();
        rng::shuffle(&mut rng_e, &mut pool);
        let entity_values = (0..config.entities).map(|i| pool[i % pool.len()]).collect();

        let mut families: BTreeMap<String, Vec<String>> = BTreeMap::new();
        let mut out = BTreeMap::new();
        for &(code, family, script) in languages {
            let letters = script.letters();
            let base = families
                .entry(family.to_string())
                .or_insert_with(|| {
                    let mut r = rng::stream(seed ^ rng::fnv1a64(family.as_bytes()), "synthetic-family", 0);
                    let mut taken = BTreeSet::new();
                    (0..concepts)
                        .map(|_| {
                            let w = random_word(&mut r, &letters, &taken);
                            taken.insert(w.clone());
                            w
                        })
                        .collect()
                })
                .clone();
            let mut r = rng::stream(seed ^ rng::fnv1a64(code.as_bytes()), "synthetic-language", 0);
            let mut taken: BTreeSet<String> = base.iter().cloned().collect();
            let lexicon = base
                .into_iter()
                .map(|w| {
                    if r.random_bool(config.drift) {
                        let fresh = random_word(&mut r, &letters, &taken);
                        taken.insert(fresh.clone());
                        fresh
                    } else {
                        w
                    }
                })
                .collect();
            out.insert(
                code.to_string(),
                PseudoLanguage { code: code.to_string(), family: family.to_string(), lexicon },
            );
        }
        Self { config, entities, entity_values, languages: out }
    }

    /// A pretraining language, two languages in each of two families.
    pub fn standard(config: SyntheticConfig, seed: u64) -> Self {
        Self::new(
            config,
            seed,
            &[
                ("en", "west", Script::Latin),
                ("hi", "north", Script::Devanagari),
                ("mr", "north", Script::Devanagari),
                ("ta", "south", Script::Malayalam),
                ("ml", "south", Script::Malayalam),
            ],
        )
    }

    pub fn language(&self, code: &str) -> &PseudoLanguage {
        self.languages.get(code).unwrap_or_else(|| panic!("unknown pseudo-language {code}"))
    }

    /// `n` records in `code`, ids `{prefix}{index}`.
    pub fn generate(&self, code: &str, n: usize, seed: u64, prefix: &str) -> Vec<QaRecord> {
        let lang = self.language(code);
        let cfg = &self.config;
        let mut r = rng::stream(seed ^ rng::fnv1a64(code.as_bytes()), "synthetic-records", 0);
        let filler = |r: &mut rand_chacha::ChaCha8Rng, words: &mut Vec<String>| {
            for _ in 0..rng::index(r, cfg.max_filler_run + 1) {
                let k = QUESTION_WORDS + cfg.relations + rng::index(r, cfg.fillers);
                words.push(lang.lexicon[k].clone());
            }
        };
        (0..n)
            .map(|i| {
                let mut ents: Vec<usize> = (0..cfg.entities).collect();
                rng::shuffle(&mut r, &mut ents);
                let values: Vec<usize> = if cfg.fixed_values {
                    ents[..cfg.facts_per_context].iter().map(|&e| self.entity_values[e]).collect()
                } else {
                    let mut values = BTreeSet::new();
                    while values.len() < cfg.facts_per_context {
                        values.insert(cfg.values.0 + rng::index(&mut r, cfg.values.1 - cfg.values.0));
                    }
                    let mut values: Vec<usize> = values.into_iter().collect();
                    rng::shuffle(&mut r, &mut values);
                    values
                };
                let target = rng::index(&mut r, cfg.facts_per_context);

                let mut words: Vec<String> = Vec::new();
                let mut answer_word = 0;
                for f in 0..cfg.facts_per_context {
                    filler(&mut r, &mut words);
                    words.push(self.entities[ents[f]].clone());
                    if cfg.relations > 0 {
                        words.push(lang.lexicon[QUESTION_WORDS + rng::index(&mut r, cfg.relations)].clone());
                    }
                    if f == target {
                        answer_word = words.len();
                    }
                    words.push(values[f].to_string());
                }
                filler(&mut r, &mut words);
                let answer_start = words[..answer_word].iter().map(|w| w.chars().count() + 1).sum();
                let question = format!("{} {} {}", lang.lexicon[0], self.entities[ents[target]], lang.lexicon[1]);
                QaRecord {
                    id: format!("{prefix}{i:05}"),
                    context: words.join(" "),
                    question,
                    answer_text: values[target].to_string(),
                    answer_start,
                    language: code.to_string(),
                }
            })
            .collect()
    }

    /// Word-for-word translator between two pseudo-languages.
    pub fn dictionary(&self, from: &str, to: &str) -> WordDictionary {
        let (a, b) = (self.language(from), self.language(to));
        WordDictionary::new(from, to, a.lexicon.iter().cloned().zip(b.lexicon.iter().cloned()))
    }

    pub fn family(&self, code: &str) -> &str {
        &self.language(code).family
    }
}
