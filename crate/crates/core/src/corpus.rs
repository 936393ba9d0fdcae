//! QA record ingestion, validation and language-stratified splitting.

use std::collections::{BTreeMap, HashSet};
use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng;

/// One question/context/answer instance. `answer_start` counts code points.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QaRecord {
    pub id: String,
    pub context: String,
    pub question: String,
    pub answer_text: String,
    pub answer_start: usize,
    pub language: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetFormat {
    Jsonl,
    Csv,
}

impl DatasetFormat {
    pub fn from_path(path: &Path) -> Option<Self> {
        match path.extension()?.to_str()? {
            "jsonl" | "json" => Some(Self::Jsonl),
            "csv" => Some(Self::Csv),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RecordIssue {
    pub id: String,
    pub reason: String,
}

impl std::fmt::Display for RecordIssue {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}: {}", self.id, self.reason)
    }
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("parse failure at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{} record(s) failed validation: {}", .0.len(), join_issues(.0))]
    Validation(Vec<RecordIssue>),
    #[error("split needs more than {requested} records, got {available}")]
    InsufficientRecords { requested: usize, available: usize },
    #[error("record {id} has an empty language code")]
    EmptyStratum { id: String },
}

fn join_issues(issues: &[RecordIssue]) -> String {
    issues.iter().map(|i| i.to_string()).collect::<Vec<_>>().join("; ")
}

/// Slice `text` by code-point positions `[start, end)`.
pub fn char_slice(text: &str, start: usize, end: usize) -> Option<&str> {
    if start > end {
        return None;
    }
    let mut indices = text.char_indices().map(|(b, _)| b).chain(Some(text.len()));
    let from = indices.nth(start)?;
    let to = if end == start { from } else { indices.nth(end - start - 1)? };
    Some(&text[from..to])
}

impl QaRecord {
    /// Checks the record invariants, returning the reason on failure.
    pub fn check(&self) -> Result<(), String> {
        if self.id.is_empty() {
            return Err("empty id".into());
        }
        if self.answer_text.is_empty() {
            return Err("empty answer_text".into());
        }
        let len = self.answer_text.chars().count();
        let ctx_len = self.context.chars().count();
        if self.answer_start + len > ctx_len {
            return Err(format!(
                "answer span {}..{} exceeds context length {}",
                self.answer_start,
                self.answer_start + len,
                ctx_len
            ));
        }
        let slice = char_slice(&self.context, self.answer_start, self.answer_start + len);
        if slice != Some(self.answer_text.as_str()) {
            return Err(format!("context at {} does not match answer_text", self.answer_start));
        }
        Ok(())
    }

    /// Exclusive end of the answer in code points.
    pub fn answer_end(&self) -> usize {
        self.answer_start + self.answer_text.chars().count()
    }
}

/// Validates a whole dataset: per-record invariants plus id uniqueness.
pub fn validate(records: &[QaRecord]) -> Result<(), CorpusError> {
    let mut seen = HashSet::new();
    let mut issues = Vec::new();
    for r in records {
        if let Err(reason) = r.check() {
            issues.push(RecordIssue { id: r.id.clone(), reason });
        }
        if !seen.insert(r.id.as_str()) {
            issues.push(RecordIssue { id: r.id.clone(), reason: "duplicate id".into() });
        }
    }
    if issues.is_empty() {
        Ok(())
    } else {
        Err(CorpusError::Validation(issues))
    }
}

pub fn load_dataset(path: &Path, format: DatasetFormat) -> Result<Vec<QaRecord>, CorpusError> {
    let io_err = |source| CorpusError::Io { path: path.to_path_buf(), source };
    let file = fs::File::open(path).map_err(io_err)?;
    let records = match format {
        DatasetFormat::Jsonl => parse_jsonl(BufReader::new(file)).map_err(|e| match e {
            JsonlError::Io(source) => io_err(source),
            JsonlError::Parse { line, message } => CorpusError::Parse { line, message },
        })?,
        DatasetFormat::Csv => {
            let mut reader = csv::Reader::from_reader(file);
            let mut out = Vec::new();
            for (row, result) in reader.deserialize::<QaRecord>().enumerate() {
                // Row 1 is the header.
                out.push(result.map_err(|e| CorpusError::Parse { line: row + 2, message: e.to_string() })?);
            }
            out
        }
    };
    validate(&records)?;
    Ok(records)
}

#[derive(Debug)]
pub(crate) enum JsonlError {
    Io(std::io::Error),
    Parse { line: usize, message: String },
}

/// Parses one JSON value per non-blank line.
pub(crate) fn parse_jsonl<T: serde::de::DeserializeOwned>(reader: impl BufRead) -> Result<Vec<T>, JsonlError> {
    let mut out = Vec::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(JsonlError::Io)?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| JsonlError::Parse { line: n + 1, message: e.to_string() })?);
    }
    Ok(out)
}

pub fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> std::io::Result<()> {
    let mut w = BufWriter::new(fs::File::create(path)?);
    for item in items {
        serde_json::to_writer(&mut w, item)?;
        w.write_all(b"\n")?;
    }
    w.flush()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StratumCounts {
    pub train: usize,
    pub validation: usize,
    pub test: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetSplit {
    pub train: Vec<QaRecord>,
    pub validation: Vec<QaRecord>,
    pub test: Vec<QaRecord>,
    pub seed: u64,
    pub strata: BTreeMap<String, StratumCounts>,
}

#[derive(Debug, Serialize, Deserialize)]
pub struct SplitManifest {
    pub seed: u64,
    pub test_size: usize,
    pub val_size: usize,
    pub train: usize,
    pub validation: usize,
    pub test: usize,
    pub strata: BTreeMap<String, StratumCounts>,
}

/// Largest-remainder apportionment of `total` over strata of the given sizes.
/// Ties on the remainder go to the larger stratum, then to the earlier key.
pub fn proportional_allocation(sizes: &BTreeMap<String, usize>, total: usize) -> BTreeMap<String, usize> {
    let population: usize = sizes.values().sum();
    if population == 0 {
        return sizes.keys().map(|k| (k.clone(), 0)).collect();
    }
    let mut alloc: BTreeMap<String, usize> = BTreeMap::new();
    let mut remainders = Vec::new();
    for (lang, &n) in sizes {
        let scaled = total * n;
        alloc.insert(lang.clone(), scaled / population);
        remainders.push((scaled % population, n, lang.clone()));
    }
    let assigned: usize = alloc.values().sum();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(b.1.cmp(&a.1)).then(a.2.cmp(&b.2)));
    for (_, _, lang) in remainders.into_iter().take(total - assigned) {
        *alloc.get_mut(&lang).unwrap() += 1;
    }
    alloc
}

/// Deterministic language-stratified split. Each stratum is shuffled with
/// [`rng::stratum_rng`]; its test allocation is taken from the front of the
/// shuffled order and the validation allocation (apportioned over what
/// remains) from the records immediately after.
pub fn stratified_split(
    records: &[QaRecord],
    test_size: usize,
    val_size: usize,
    seed: u64,
) -> Result<DatasetSplit, CorpusError> {
    if test_size + val_size >= records.len() {
        return Err(CorpusError::InsufficientRecords { requested: test_size + val_size, available: records.len() });
    }
    let mut strata: BTreeMap<String, Vec<&QaRecord>> = BTreeMap::new();
    for r in records {
        if r.language.is_empty() {
            return Err(CorpusError::EmptyStratum { id: r.id.clone() });
        }
        strata.entry(r.language.clone()).or_default().push(r);
    }
    let sizes: BTreeMap<String, usize> = strata.iter().map(|(k, v)| (k.clone(), v.len())).collect();
    let test_alloc = proportional_allocation(&sizes, test_size);
    let remaining: BTreeMap<String, usize> = sizes.iter().map(|(k, &n)| (k.clone(), n - test_alloc[k])).collect();
    let val_alloc = proportional_allocation(&remaining, val_size);

    let mut split =
        DatasetSplit { train: Vec::new(), validation: Vec::new(), test: Vec::new(), seed, strata: BTreeMap::new() };
    for (lang, mut members) in strata {
        let mut rng = rng::stratum_rng(seed, &lang);
        rng::shuffle(&mut rng, &mut members);
        let t = test_alloc[&lang];
        let v = val_alloc[&lang];
        split.test.extend(members[..t].iter().map(|r| (*r).clone()));
        split.validation.extend(members[t..t + v].iter().map(|r| (*r).clone()));
        split.train.extend(members[t + v..].iter().map(|r| (*r).clone()));
        split.strata.insert(lang, StratumCounts { train: members.len() - t - v, validation: v, test: t });
    }
    Ok(split)
}

impl DatasetSplit {
    /// Writes `train.jsonl`, `validation.jsonl`, `test.jsonl` and `manifest.json`.
    pub fn write(&self, dir: &Path, test_size: usize, val_size: usize) -> std::io::Result<()> {
        fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("train.jsonl"), &self.train)?;
        write_jsonl(&dir.join("validation.jsonl"), &self.validation)?;
        write_jsonl(&dir.join("test.jsonl"), &self.test)?;
        let manifest = SplitManifest {
            seed: self.seed,
            test_size,
            val_size,
            train: self.train.len(),
            validation: self.validation.len(),
            test: self.test.len(),
            strata: self.strata.clone(),
        };
        let mut text = serde_json::to_string_pretty(&manifest)?;
        text.push('\n');
        fs::write(dir.join("manifest.json"), text)
    }
}
