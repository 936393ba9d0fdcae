//! Translation and transliteration augmentation with answer relocation.
//!
//! Context, question and answer are transformed independently; the answer is
//! then searched for in the transformed context. Records whose answer cannot
//! be found are dropped and counted, never repaired.

use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{self, QaRecord};

/// Matches any language in a transformer's source position.
pub const ANY_LANGUAGE: &str = "*";
/// Separates a base record id from the variant language.
pub const VARIANT_SEPARATOR: &str = "::";
pub const ANSWER_NOT_IN_CONTEXT: &str = "answer-not-in-context";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TransformKind {
    Translation,
    Transliteration,
}

impl fmt::Display for TransformKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Translation => "translation",
            Self::Transliteration => "transliteration",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Field {
    Context,
    Question,
    Answer,
}

impl fmt::Display for Field {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Context => "context",
            Self::Question => "question",
            Self::Answer => "answer",
        })
    }
}

#[derive(Debug, Clone, Copy)]
pub struct TransformRequest<'a> {
    /// Base id of the record being transformed (no variant suffix).
    pub record_id: &'a str,
    pub field: Field,
    pub text: &'a str,
}

#[derive(Debug, Error)]
pub enum AugmentError {
    #[error("transformer failure: {0}")]
    Transformer(String),
    #[error("adapter file {} is missing", .0.display())]
    MissingAdapterFile(PathBuf),
    #[error("transformer expects source {expected}, record is {actual}")]
    LanguageMismatch { expected: String, actual: String },
    #[error("invalid plan: {0}")]
    InvalidPlan(String),
    #[error("{} adapter failure(s): {}", .0.len(), .0.iter().map(|e| e.to_string()).collect::<Vec<_>>().join("; "))]
    Aggregated(Vec<AugmentError>),
}

/// Port to an external text transformation system.
pub trait TextTransformer: Send + Sync {
    fn kind(&self) -> TransformKind;
    fn source_language(&self) -> &str;
    fn target_language(&self) -> &str;
    /// Must map `""` to `""`. Transliterators must keep the word count.
    fn transform(&self, request: &TransformRequest<'_>) -> Result<String, AugmentError>;
}

fn language_matches(expected: &str, actual: &str) -> bool {
    expected == ANY_LANGUAGE || expected == actual
}

/// Returns the text with each whitespace-separated word replaced by `f(word)`,
/// keeping the whitespace runs untouched.
fn map_words(text: &str, mut f: impl FnMut(&str) -> String) -> String {
    let mut out = String::with_capacity(text.len());
    let mut word_start = None;
    for (i, c) in text.char_indices() {
        if c.is_whitespace() {
            if let Some(s) = word_start.take() {
                out.push_str(&f(&text[s..i]));
            }
            out.push(c);
        } else if word_start.is_none() {
            word_start = Some(i);
        }
    }
    if let Some(s) = word_start {
        out.push_str(&f(&text[s..]));
    }
    out
}

#[derive(Debug, Clone)]
pub struct Identity {
    pub kind: TransformKind,
    pub source: String,
    pub target: String,
}

impl Identity {
    pub fn new(kind: TransformKind, source: &str, target: &str) -> Self {
        Self { kind, source: source.into(), target: target.into() }
    }
}

impl TextTransformer for Identity {
    fn kind(&self) -> TransformKind {
        self.kind
    }
    fn source_language(&self) -> &str {
        &self.source
    }
    fn target_language(&self) -> &str {
        &self.target
    }
    fn transform(&self, request: &TransformRequest<'_>) -> Result<String, AugmentError> {
        Ok(request.text.to_string())
    }
}

/// Word-for-word substitution; words missing from the table pass through.
#[derive(Debug, Clone)]
pub struct WordDictionary {
    pub source: String,
    pub target: String,
    table: HashMap<String, String>,
}

impl WordDictionary {
    pub fn new<I: IntoIterator<Item = (String, String)>>(source: &str, target: &str, pairs: I) -> Self {
        Self { source: source.into(), target: target.into(), table: pairs.into_iter().collect() }
    }

    /// Reads `source_word<TAB>target_word` lines.
    pub fn load(path: &Path, source: &str, target: &str) -> Result<Self, AugmentError> {
        let text = fs::read_to_string(path).map_err(|_| AugmentError::MissingAdapterFile(path.into()))?;
        let mut pairs = Vec::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let (a, b) = line.split_once('\t').ok_or_else(|| {
                AugmentError::Transformer(format!("{}:{}: expected two tab-separated words", path.display(), n + 1))
            })?;
            pairs.push((a.to_string(), b.to_string()));
        }
        Ok(Self::new(source, target, pairs))
    }

    /// The reverse mapping. Exact only when the table is injective.
    pub fn inverse(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
            table: self.table.iter().map(|(a, b)| (b.clone(), a.clone())).collect(),
        }
    }
}

impl TextTransformer for WordDictionary {
    fn kind(&self) -> TransformKind {
        TransformKind::Translation
    }
    fn source_language(&self) -> &str {
        &self.source
    }
    fn target_language(&self) -> &str {
        &self.target
    }
    fn transform(&self, request: &TransformRequest<'_>) -> Result<String, AugmentError> {
        Ok(map_words(request.text, |w| self.table.get(w).cloned().unwrap_or_else(|| w.to_string())))
    }
}

/// Per-code-point script mapping. Whitespace is never remapped, so word
/// boundaries survive.
#[derive(Debug, Clone)]
pub struct CharMap {
    pub source: String,
    pub target: String,
    table: HashMap<char, char>,
}

impl CharMap {
    pub fn new<I: IntoIterator<Item = (char, char)>>(source: &str, target: &str, pairs: I) -> Self {
        Self {
            source: source.into(),
            target: target.into(),
            table: pairs.into_iter().filter(|(a, b)| !a.is_whitespace() && !b.is_whitespace()).collect(),
        }
    }

    /// Shifts every code point of `range` by `offset`.
    pub fn shift(source: &str, target: &str, range: std::ops::RangeInclusive<char>, offset: i64) -> Self {
        let pairs = range.filter_map(|c| {
            let shifted = u32::try_from(i64::from(c as u32) + offset).ok()?;
            Some((c, char::from_u32(shifted)?))
        });
        Self::new(source, target, pairs)
    }

    pub fn inverse(&self) -> Self {
        Self {
            source: self.target.clone(),
            target: self.source.clone(),
            table: self.table.iter().map(|(a, b)| (*b, *a)).collect(),
        }
    }
}

impl TextTransformer for CharMap {
    fn kind(&self) -> TransformKind {
        TransformKind::Transliteration
    }
    fn source_language(&self) -> &str {
        &self.source
    }
    fn target_language(&self) -> &str {
        &self.target
    }
    fn transform(&self, request: &TransformRequest<'_>) -> Result<String, AugmentError> {
        Ok(request.text.chars().map(|c| self.table.get(&c).copied().unwrap_or(c)).collect())
    }
}

/// Wraps a closure; handy for tests and one-off experiments.
pub struct FnTransformer<F> {
    pub kind: TransformKind,
    pub source: String,
    pub target: String,
    pub f: F,
}

impl<F> FnTransformer<F>
where
    F: Fn(&TransformRequest<'_>) -> String + Send + Sync,
{
    pub fn new(kind: TransformKind, source: &str, target: &str, f: F) -> Self {
        Self { kind, source: source.into(), target: target.into(), f }
    }
}

impl<F> TextTransformer for FnTransformer<F>
where
    F: Fn(&TransformRequest<'_>) -> String + Send + Sync,
{
    fn kind(&self) -> TransformKind {
        self.kind
    }
    fn source_language(&self) -> &str {
        &self.source
    }
    fn target_language(&self) -> &str {
        &self.target
    }
    fn transform(&self, request: &TransformRequest<'_>) -> Result<String, AugmentError> {
        Ok((self.f)(request))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ParallelLine {
    pub id: String,
    pub field: Field,
    pub lang: String,
    pub text: String,
}

/// Pre-translated texts keyed by base record id and field.
#[derive(Debug, Clone)]
pub struct ParallelCorpus {
    pub source: String,
    pub target: String,
    path: PathBuf,
    entries: HashMap<(String, Field), String>,
}

impl ParallelCorpus {
    /// Loads the lines of `path` whose `lang` equals `target`.
    pub fn load(path: &Path, source: &str, target: &str) -> Result<Self, AugmentError> {
        let file = fs::File::open(path).map_err(|_| AugmentError::MissingAdapterFile(path.into()))?;
        let lines: Vec<ParallelLine> = corpus::parse_jsonl(BufReader::new(file)).map_err(|e| {
            AugmentError::Transformer(match e {
                corpus::JsonlError::Io(e) => format!("{}: {e}", path.display()),
                corpus::JsonlError::Parse { line, message } => {
                    format!("{}:{line}: {message}", path.display())
                }
            })
        })?;
        let entries = lines.into_iter().filter(|l| l.lang == target).map(|l| ((l.id, l.field), l.text)).collect();
        Ok(Self { source: source.into(), target: target.into(), path: path.into(), entries })
    }
}

impl TextTransformer for ParallelCorpus {
    fn kind(&self) -> TransformKind {
        TransformKind::Translation
    }
    fn source_language(&self) -> &str {
        &self.source
    }
    fn target_language(&self) -> &str {
        &self.target
    }
    fn transform(&self, request: &TransformRequest<'_>) -> Result<String, AugmentError> {
        if request.text.is_empty() {
            return Ok(String::new());
        }
        self.entries.get(&(request.record_id.to_string(), request.field)).cloned().ok_or_else(|| {
            AugmentError::Transformer(format!(
                "{}: no {} line for id {} field {}",
                self.path.display(),
                self.target,
                request.record_id,
                request.field
            ))
        })
    }
}

/// Code-point index of the first exact occurrence of `answer` in `context`.
pub fn relocate_answer(context: &str, answer: &str) -> Option<usize> {
    if answer.is_empty() {
        return None;
    }
    let byte = context.find(answer)?;
    let next = byte + answer.chars().next().map_or(1, char::len_utf8);
    if context[next..].contains(answer) {
        log::warn!("answer {answer:?} occurs more than once; taking the first occurrence");
    }
    Some(context[..byte].chars().count())
}

pub fn base_id(id: &str) -> &str {
    id.split(VARIANT_SEPARATOR).next().unwrap_or(id)
}

pub fn variant_id(id: &str, language: &str) -> String {
    format!("{}{VARIANT_SEPARATOR}{language}", base_id(id))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Augmented {
    Kept(QaRecord),
    Dropped(String),
}

impl Augmented {
    pub fn kept(self) -> Option<QaRecord> {
        match self {
            Self::Kept(r) => Some(r),
            Self::Dropped(_) => None,
        }
    }
}

pub fn augment_record(record: &QaRecord, transformer: &dyn TextTransformer) -> Result<Augmented, AugmentError> {
    if !language_matches(transformer.source_language(), &record.language) {
        return Err(AugmentError::LanguageMismatch {
            expected: transformer.source_language().into(),
            actual: record.language.clone(),
        });
    }
    let id = base_id(&record.id);
    let apply = |field, text: &str| -> Result<String, AugmentError> {
        let out = transformer.transform(&TransformRequest { record_id: id, field, text })?;
        if transformer.kind() == TransformKind::Transliteration
            && out.split_whitespace().count() != text.split_whitespace().count()
        {
            return Err(AugmentError::Transformer(format!("transliteration changed the word count of {id} {field}")));
        }
        Ok(out)
    };
    let context = apply(Field::Context, &record.context)?;
    let question = apply(Field::Question, &record.question)?;
    let answer_text = apply(Field::Answer, &record.answer_text)?;
    let Some(answer_start) = relocate_answer(&context, &answer_text) else {
        return Ok(Augmented::Dropped(ANSWER_NOT_IN_CONTEXT.into()));
    };
    let target = transformer.target_language();
    Ok(Augmented::Kept(QaRecord {
        id: variant_id(&record.id, target),
        context,
        question,
        answer_text,
        answer_start,
        language: target.into(),
    }))
}

/// Applies each hop in turn. A drop at hop `k` (1-based) drops the chain with
/// reason `hop k: <reason>`.
pub fn pivot_chain(record: &QaRecord, transformers: &[&dyn TextTransformer]) -> Result<Augmented, AugmentError> {
    check_chain(transformers)?;
    let mut current = record.clone();
    for (hop, t) in transformers.iter().enumerate() {
        match augment_record(&current, *t)? {
            Augmented::Kept(next) => current = next,
            Augmented::Dropped(reason) => return Ok(Augmented::Dropped(format!("hop {}: {reason}", hop + 1))),
        }
    }
    Ok(Augmented::Kept(current))
}

fn check_chain(transformers: &[&dyn TextTransformer]) -> Result<(), AugmentError> {
    if transformers.is_empty() {
        return Err(AugmentError::InvalidPlan("empty transformer chain".into()));
    }
    for pair in transformers.windows(2) {
        if !language_matches(pair[1].source_language(), pair[0].target_language()) {
            return Err(AugmentError::InvalidPlan(format!(
                "hop {} -> {} does not compose with {} -> {}",
                pair[0].source_language(),
                pair[0].target_language(),
                pair[1].source_language(),
                pair[1].target_language()
            )));
        }
    }
    Ok(())
}

#[derive(Clone)]
pub struct AugmentPlan {
    pub target: String,
    pub kind: TransformKind,
    pub chain: Vec<Arc<dyn TextTransformer>>,
}

impl fmt::Debug for AugmentPlan {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AugmentPlan")
            .field("target", &self.target)
            .field("kind", &self.kind)
            .field("hops", &self.chain.len())
            .finish()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TranslationGroup {
    pub original: QaRecord,
    pub variants: BTreeMap<String, QaRecord>,
    pub provenance: BTreeMap<String, TransformKind>,
}

impl TranslationGroup {
    pub fn id(&self) -> &str {
        base_id(&self.original.id)
    }

    /// The original followed by the variants in language order.
    pub fn members(&self) -> impl Iterator<Item = &QaRecord> {
        std::iter::once(&self.original).chain(self.variants.values())
    }

    pub fn len(&self) -> usize {
        1 + self.variants.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Groups records that share a base id. The record without a variant suffix
/// (or the first one seen) becomes the original.
pub fn group_records(records: &[QaRecord]) -> BTreeMap<String, TranslationGroup> {
    let mut groups: BTreeMap<String, TranslationGroup> = BTreeMap::new();
    for r in records {
        let key = base_id(&r.id).to_string();
        match groups.get_mut(&key) {
            None => {
                groups.insert(
                    key,
                    TranslationGroup { original: r.clone(), variants: BTreeMap::new(), provenance: BTreeMap::new() },
                );
            }
            Some(g) => {
                if r.id == key && g.original.id != key {
                    let old = std::mem::replace(&mut g.original, r.clone());
                    g.variants.insert(old.language.clone(), old);
                } else {
                    g.variants.insert(r.language.clone(), r.clone());
                }
            }
        }
    }
    groups
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CellCounts {
    pub attempted: usize,
    pub succeeded: usize,
    pub dropped: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AugmentReport {
    /// Keyed by `(target language, kind)`.
    #[serde(with = "cell_list")]
    pub cells: BTreeMap<(String, TransformKind), CellCounts>,
    /// Variant id → reason.
    pub drop_reasons: BTreeMap<String, String>,
}

mod cell_list {
    use super::*;
    use serde::{Deserializer, Serializer};

    #[derive(Serialize, Deserialize)]
    struct Cell {
        target: String,
        kind: TransformKind,
        #[serde(flatten)]
        counts: CellCounts,
    }

    pub fn serialize<S: Serializer>(
        cells: &BTreeMap<(String, TransformKind), CellCounts>,
        s: S,
    ) -> Result<S::Ok, S::Error> {
        let list: Vec<Cell> = cells
            .iter()
            .map(|((target, kind), counts)| Cell { target: target.clone(), kind: *kind, counts: *counts })
            .collect();
        list.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(
        d: D,
    ) -> Result<BTreeMap<(String, TransformKind), CellCounts>, D::Error> {
        let list = Vec::<Cell>::deserialize(d)?;
        Ok(list.into_iter().map(|c| ((c.target, c.kind), c.counts)).collect())
    }
}

impl AugmentReport {
    pub fn totals(&self) -> CellCounts {
        self.cells.values().fold(CellCounts::default(), |acc, c| CellCounts {
            attempted: acc.attempted + c.attempted,
            succeeded: acc.succeeded + c.succeeded,
            dropped: acc.dropped + c.dropped,
        })
    }

    /// Associative merge of two partial reports.
    pub fn merge(mut self, other: AugmentReport) -> AugmentReport {
        for (k, c) in other.cells {
            let e = self.cells.entry(k).or_default();
            e.attempted += c.attempted;
            e.succeeded += c.succeeded;
            e.dropped += c.dropped;
        }
        self.drop_reasons.extend(other.drop_reasons);
        self
    }
}

/// Runs every plan over every record. One group per input record.
pub fn build_groups(
    records: &[QaRecord],
    plans: &[AugmentPlan],
) -> Result<(Vec<TranslationGroup>, AugmentReport), AugmentError> {
    if plans.is_empty() {
        return Err(AugmentError::InvalidPlan("no plans given".into()));
    }
    for (i, p) in plans.iter().enumerate() {
        if plans[..i].iter().any(|q| q.target == p.target) {
            return Err(AugmentError::InvalidPlan(format!("target {} planned twice", p.target)));
        }
        if p.chain.last().map(|t| t.target_language()) != Some(p.target.as_str()) {
            return Err(AugmentError::InvalidPlan(format!("chain for {} ends elsewhere", p.target)));
        }
    }
    let results: Vec<Result<(TranslationGroup, AugmentReport), Vec<AugmentError>>> = records
        .par_iter()
        .map(|record| {
            let mut group =
                TranslationGroup { original: record.clone(), variants: BTreeMap::new(), provenance: BTreeMap::new() };
            let mut report = AugmentReport::default();
            let mut errors = Vec::new();
            for plan in plans {
                let chain: Vec<&dyn TextTransformer> = plan.chain.iter().map(|t| t.as_ref()).collect();
                let cell = report.cells.entry((plan.target.clone(), plan.kind)).or_default();
                cell.attempted += 1;
                match pivot_chain(record, &chain) {
                    Ok(Augmented::Kept(variant)) => {
                        cell.succeeded += 1;
                        group.provenance.insert(plan.target.clone(), plan.kind);
                        group.variants.insert(plan.target.clone(), variant);
                    }
                    Ok(Augmented::Dropped(reason)) => {
                        cell.dropped += 1;
                        report.drop_reasons.insert(variant_id(&record.id, &plan.target), reason);
                    }
                    Err(e) => errors.push(e),
                }
            }
            if errors.is_empty() {
                Ok((group, report))
            } else {
                Err(errors)
            }
        })
        .collect();
    let mut groups = Vec::with_capacity(records.len());
    let mut report = AugmentReport::default();
    let mut failures = Vec::new();
    for r in results {
        match r {
            Ok((g, rep)) => {
                groups.push(g);
                report = report.merge(rep);
            }
            Err(mut errs) => failures.append(&mut errs),
        }
    }
    if !failures.is_empty() {
        return Err(AugmentError::Aggregated(failures));
    }
    Ok((groups, report))
}

/// Adapter selection in a plan file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AdapterSpec {
    Identity,
    /// Reads `<adapters>/<lang>.jsonl` for every hop target.
    Parallel,
    /// Reads `<adapters>/<file>` as a tab-separated word table.
    Dictionary {
        file: String,
    },
    /// Shifts code points in `from..=to` by `offset`.
    CharShift {
        from: char,
        to: char,
        offset: i64,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanSpec {
    pub target: String,
    pub kind: TransformKind,
    #[serde(default)]
    pub via: Option<String>,
    pub adapter: AdapterSpec,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PlanFile {
    pub plans: Vec<PlanSpec>,
}

impl PlanFile {
    pub fn load(path: &Path) -> Result<Self, AugmentError> {
        let text = fs::read_to_string(path).map_err(|_| AugmentError::MissingAdapterFile(path.into()))?;
        serde_json::from_str(&text).map_err(|e| AugmentError::InvalidPlan(format!("{}: {e}", path.display())))
    }

    /// Instantiates the adapters, reading any files from `adapters_dir`.
    pub fn resolve(&self, adapters_dir: &Path) -> Result<Vec<AugmentPlan>, AugmentError> {
        self.plans.iter().map(|p| p.resolve(adapters_dir)).collect()
    }
}

impl PlanSpec {
    pub fn resolve(&self, adapters_dir: &Path) -> Result<AugmentPlan, AugmentError> {
        let mut hops: Vec<(&str, &str)> = Vec::new();
        match &self.via {
            Some(via) => {
                hops.push((ANY_LANGUAGE, via));
                hops.push((via, &self.target));
            }
            None => hops.push((ANY_LANGUAGE, &self.target)),
        }
        let single_hop = |what: &str| {
            if self.via.is_some() {
                Err(AugmentError::InvalidPlan(format!("{what} adapter does not support a pivot")))
            } else {
                Ok(())
            }
        };
        let chain: Vec<Arc<dyn TextTransformer>> = match &self.adapter {
            AdapterSpec::Identity => {
                hops.iter().map(|(s, t)| Arc::new(Identity::new(self.kind, s, t)) as Arc<dyn TextTransformer>).collect()
            }
            AdapterSpec::Parallel => {
                if self.kind != TransformKind::Translation {
                    return Err(AugmentError::InvalidPlan("parallel adapter only translates".into()));
                }
                hops.iter()
                    .map(|(s, t)| {
                        ParallelCorpus::load(&adapters_dir.join(format!("{t}.jsonl")), s, t)
                            .map(|c| Arc::new(c) as Arc<dyn TextTransformer>)
                    })
                    .collect::<Result<_, _>>()?
            }
            AdapterSpec::Dictionary { file } => {
                single_hop("dictionary")?;
                vec![Arc::new(WordDictionary::load(&adapters_dir.join(file), ANY_LANGUAGE, &self.target)?)]
            }
            AdapterSpec::CharShift { from, to, offset } => {
                single_hop("char_shift")?;
                vec![Arc::new(CharMap::shift(ANY_LANGUAGE, &self.target, *from..=*to, *offset))]
            }
        };
        if chain.iter().any(|t| t.kind() != self.kind) {
            return Err(AugmentError::InvalidPlan(format!(
                "adapter for {} does not produce {}",
                self.target, self.kind
            )));
        }
        Ok(AugmentPlan { target: self.target.clone(), kind: self.kind, chain })
    }
}
