//! Span decoding and Jaccard evaluation.
//!
//! Jaccard is computed over the sets of whitespace-separated words of the
//! predicted and gold answers; two empty answers score 1. Aggregates are
//! accumulated as exact rationals, so the overall score and the
//! count-weighted mean of the per-language scores are the same number.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{ToPrimitive, Zero};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{char_slice, QaRecord};
use crate::encoder::{self, EncoderConfig, EncoderError, EncoderParams};
use crate::features::{self, Feature, FeatureConfig, FeatureError};
use crate::tokenizer::Vocab;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("evaluation set is empty")]
    EmptyEvaluationSet,
    #[error(transparent)]
    Feature(#[from] FeatureError),
    #[error(transparent)]
    Encoder(#[from] EncoderError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DecodeConfig {
    pub n_best: usize,
    pub max_answer_tokens: usize,
}

impl Default for DecodeConfig {
    fn default() -> Self {
        Self { n_best: 20, max_answer_tokens: 30 }
    }
}

/// Indices of the `n` largest values among `positions`; earlier positions
/// win ties.
fn top_positions(logits: ArrayView1<f64>, positions: &[usize], n: usize) -> Vec<usize> {
    let mut ranked = positions.to_vec();
    ranked.sort_by(|&a, &b| logits[b].total_cmp(&logits[a]).then(a.cmp(&b)));
    ranked.truncate(n);
    ranked
}

#[derive(Debug, Clone, Copy)]
struct Candidate {
    score: f64,
    char_start: usize,
    char_end: usize,
}

impl Candidate {
    /// Higher score, then earlier start, then shorter span.
    fn beats(&self, other: &Candidate) -> bool {
        self.score
            .total_cmp(&other.score)
            .then(other.char_start.cmp(&self.char_start))
            .then((other.char_end - other.char_start).cmp(&(self.char_end - self.char_start)))
            .is_gt()
    }
}

/// Best-scoring context span across all features of one record, or an empty
/// string when no start/end pair is valid. Row `i` of the logits belongs to
/// `features[i]`.
pub fn decode_answer(
    features: &[Feature],
    start_logits: &Array2<f64>,
    end_logits: &Array2<f64>,
    cfg: &DecodeConfig,
    context: &str,
) -> String {
    let mut best: Option<Candidate> = None;
    for (i, f) in features.iter().enumerate() {
        let context_positions: Vec<usize> = (0..f.len()).filter(|&p| f.offsets[p].is_some()).collect();
        let (s_row, e_row) = (start_logits.row(i), end_logits.row(i));
        let starts = top_positions(s_row, &context_positions, cfg.n_best);
        let ends = top_positions(e_row, &context_positions, cfg.n_best);
        for &s in &starts {
            for &e in &ends {
                if e < s || e - s >= cfg.max_answer_tokens {
                    continue;
                }
                let cand = Candidate {
                    score: s_row[s] + e_row[e],
                    char_start: f.offsets[s].unwrap().0,
                    char_end: f.offsets[e].unwrap().1,
                };
                if best.is_none_or(|b| cand.beats(&b)) {
                    best = Some(cand);
                }
            }
        }
    }
    best.and_then(|b| char_slice(context, b.char_start, b.char_end)).unwrap_or_default().to_string()
}

/// `(|A ∩ B|, |A ∪ B|)` over whitespace word sets; `(1, 1)` when both are empty.
pub fn jaccard_counts(pred: &str, gold: &str) -> (usize, usize) {
    let a: HashSet<&str> = pred.split_whitespace().collect();
    let b: HashSet<&str> = gold.split_whitespace().collect();
    if a.is_empty() && b.is_empty() {
        return (1, 1);
    }
    (a.intersection(&b).count(), a.union(&b).count())
}

pub fn jaccard(pred: &str, gold: &str) -> f64 {
    let (i, u) = jaccard_counts(pred, gold);
    i as f64 / u as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RecordScore {
    pub language: String,
    pub gold: String,
    pub pred: String,
    pub jaccard: f64,
    pub intersection: usize,
    pub union: usize,
}

impl RecordScore {
    pub fn new(language: &str, gold: &str, pred: &str) -> Self {
        let (intersection, union) = jaccard_counts(pred, gold);
        Self {
            language: language.into(),
            gold: gold.into(),
            pred: pred.into(),
            jaccard: intersection as f64 / union as f64,
            intersection,
            union,
        }
    }

    fn exact(&self) -> BigRational {
        BigRational::new(BigInt::from(self.intersection), BigInt::from(self.union))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JaccardReport {
    pub overall: f64,
    pub per_language: BTreeMap<String, f64>,
    pub per_language_counts: BTreeMap<String, usize>,
    pub per_record: BTreeMap<String, RecordScore>,
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

impl JaccardReport {
    pub fn from_scores(per_record: BTreeMap<String, RecordScore>) -> Result<Self, EvalError> {
        if per_record.is_empty() {
            return Err(EvalError::EmptyEvaluationSet);
        }
        let mut counts: BTreeMap<String, usize> = BTreeMap::new();
        for s in per_record.values() {
            *counts.entry(s.language.clone()).or_default() += 1;
        }
        let mut report = Self { overall: 0.0, per_language: BTreeMap::new(), per_language_counts: counts, per_record };
        report.overall = to_f64(&report.exact_overall());
        report.per_language =
            report.per_language_counts.keys().map(|l| (l.clone(), to_f64(&report.exact_language_mean(l)))).collect();
        Ok(report)
    }

    /// Mean of the per-record scores as an exact fraction.
    pub fn exact_overall(&self) -> BigRational {
        let sum = self.per_record.values().fold(BigRational::zero(), |acc, s| acc + s.exact());
        sum / BigInt::from(self.per_record.len())
    }

    pub fn exact_language_mean(&self, language: &str) -> BigRational {
        let scores: Vec<BigRational> =
            self.per_record.values().filter(|s| s.language == language).map(RecordScore::exact).collect();
        if scores.is_empty() {
            return BigRational::zero();
        }
        let n = scores.len();
        scores.into_iter().fold(BigRational::zero(), |a, b| a + b) / BigInt::from(n)
    }

    /// Count-weighted mean of the per-language means, exactly.
    pub fn exact_weighted_language_mean(&self) -> BigRational {
        let total: usize = self.per_language_counts.values().sum();
        let sum = self
            .per_language_counts
            .iter()
            .fold(BigRational::zero(), |acc, (l, &n)| acc + self.exact_language_mean(l) * BigInt::from(n));
        sum / BigInt::from(total)
    }

    pub fn write_json(&self, path: &Path) -> std::io::Result<()> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        fs::write(path, text)
    }

    /// `id,language,gold,pred,jaccard` rows in id order.
    pub fn write_record_csv(&self, path: &Path) -> std::io::Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["id", "language", "gold", "pred", "jaccard"])?;
        for (id, s) in &self.per_record {
            w.write_record([id.as_str(), &s.language, &s.gold, &s.pred, &s.jaccard.to_string()])?;
        }
        w.flush()
    }
}

/// Summary of one periodic evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalLog {
    pub step: u64,
    pub jaccard_overall: f64,
    pub jaccard_per_language: BTreeMap<String, f64>,
}

impl EvalLog {
    pub fn new(step: u64, report: &JaccardReport) -> Self {
        Self { step, jaccard_overall: report.overall, jaccard_per_language: report.per_language.clone() }
    }
}

/// One row per evaluation: `step,overall,<lang>...` for external plotting.
pub fn write_plot_csv(path: &Path, evals: &[EvalLog]) -> std::io::Result<()> {
    let mut languages: Vec<&String> = evals.iter().flat_map(|e| e.jaccard_per_language.keys()).collect();
    languages.sort();
    languages.dedup();
    let mut f = std::io::BufWriter::new(fs::File::create(path)?);
    write!(f, "step,overall")?;
    for l in &languages {
        write!(f, ",{l}")?;
    }
    writeln!(f)?;
    for e in evals {
        write!(f, "{},{}", e.step, e.jaccard_overall)?;
        for l in &languages {
            match e.jaccard_per_language.get(*l) {
                Some(v) => write!(f, ",{v}")?,
                None => write!(f, ",")?,
            }
        }
        writeln!(f)?;
    }
    f.flush()
}

/// Decodes one record with the given parameters.
pub fn predict(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    record: &QaRecord,
    vocab: &Vocab,
    feature_cfg: &FeatureConfig,
    decode_cfg: &DecodeConfig,
) -> Result<String, EvalError> {
    let feats = features::build_features(record, vocab, feature_cfg)?;
    let out = encoder::forward(params, cfg, &feats)?;
    Ok(decode_answer(&feats, &out.start_logits, &out.end_logits, decode_cfg, &record.context))
}

pub fn evaluate(
    params: &EncoderParams,
    cfg: &EncoderConfig,
    records: &[QaRecord],
    vocab: &Vocab,
    feature_cfg: &FeatureConfig,
    decode_cfg: &DecodeConfig,
) -> Result<JaccardReport, EvalError> {
    if records.is_empty() {
        return Err(EvalError::EmptyEvaluationSet);
    }
    let mut scores = BTreeMap::new();
    for r in records {
        let pred = predict(params, cfg, r, vocab, feature_cfg, decode_cfg)?;
        scores.insert(r.id.clone(), RecordScore::new(&r.language, &r.answer_text, &pred));
    }
    JaccardReport::from_scores(scores)
}
