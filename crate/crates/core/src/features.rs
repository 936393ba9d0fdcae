//! Sliding-window QA features.
//!
//! Each feature is laid out as `[CLS] question [SEP] context-window [SEP] [PAD]*`.
//! The window capacity is `max_length - question_tokens - 3`; consecutive
//! windows share exactly `doc_stride` context tokens, so starts advance by
//! `capacity - doc_stride`. The last window is not clamped back and may be
//! shorter than the capacity.
//!
//! # Cache file
//!
//! All integers little-endian.
//!
//! ```text
//! magic        8 bytes  "XLQFEAT1"
//! header_len   u32
//! header       JSON {"vocab_hash", "max_length", "doc_stride", "count"}
//! record*      u32 payload_len, then payload:
//!     id_len u32, id utf-8
//!     window_start u32, start_label u32, end_label u32
//!     ids          max_length × u32
//!     mask         max_length × u8
//!     segments     max_length × u8
//!     offsets      max_length × (u32 start, u32 end); u32::MAX for non-context positions
//! ```

use std::fs;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::QaRecord;
use crate::rng;
use crate::tokenizer::{self, Encoding, Vocab, CLS_ID, PAD_ID, SEP_ID};

/// Three special tokens plus at least one question token.
pub const MIN_QUESTION_BUDGET: usize = 4;
const CACHE_MAGIC: &[u8; 8] = b"XLQFEAT1";
const NO_OFFSET: u32 = u32::MAX;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("question of record {id} has {tokens} tokens; max_length {max_length} leaves no room for context")]
    QuestionTooLong { id: String, tokens: usize, max_length: usize },
    #[error("doc_stride {stride} must be smaller than the window capacity {capacity}")]
    StrideGeqCapacity { stride: usize, capacity: usize },
    #[error("invalid feature config: {0}")]
    InvalidConfig(String),
    #[error("feature cache: {0}")]
    Cache(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureConfig {
    pub max_length: usize,
    /// Context tokens shared by consecutive windows.
    pub doc_stride: usize,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self { max_length: 384, doc_stride: 128 }
    }
}

impl FeatureConfig {
    pub fn validate(&self) -> Result<(), FeatureError> {
        if self.max_length < 16 {
            return Err(FeatureError::InvalidConfig(format!("max_length {} is below 16", self.max_length)));
        }
        let capacity = self.max_length - MIN_QUESTION_BUDGET;
        if self.doc_stride >= capacity {
            return Err(FeatureError::StrideGeqCapacity { stride: self.doc_stride, capacity });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Feature {
    pub record_id: String,
    pub ids: Vec<u32>,
    pub attention_mask: Vec<u8>,
    pub segment_ids: Vec<u8>,
    /// Code-point span for context positions, `None` elsewhere.
    pub offsets: Vec<Option<(usize, usize)>>,
    pub start_label: usize,
    pub end_label: usize,
    /// Index of the first window token in the full context encoding.
    pub window_start: usize,
}

impl Feature {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn has_answer(&self) -> bool {
        self.start_label > 0
    }

    /// Position of the first context token.
    pub fn context_offset(&self) -> usize {
        self.segment_ids.iter().position(|&s| s == 1).unwrap_or(self.len())
    }

    pub fn active_len(&self) -> usize {
        self.attention_mask.iter().filter(|&&m| m == 1).count()
    }
}

/// Window start indices over `n_tokens` context tokens.
pub fn window_starts(n_tokens: usize, capacity: usize, doc_stride: usize) -> Result<Vec<usize>, FeatureError> {
    if doc_stride >= capacity {
        return Err(FeatureError::StrideGeqCapacity { stride: doc_stride, capacity });
    }
    let step = capacity - doc_stride;
    let mut starts = vec![0];
    let mut start = 0;
    while start + capacity < n_tokens {
        start += step;
        starts.push(start);
    }
    Ok(starts)
}

/// Token indices containing the first and last answer code points.
fn answer_token_span(context: &Encoding, record: &QaRecord) -> Option<(usize, usize)> {
    let (a, b) = (record.answer_start, record.answer_end());
    if b == a {
        return None;
    }
    let contains = |p: usize| context.offsets.iter().position(|&(s, e)| s <= p && p < e);
    Some((contains(a)?, contains(b - 1)?))
}

pub fn build_features(record: &QaRecord, vocab: &Vocab, cfg: &FeatureConfig) -> Result<Vec<Feature>, FeatureError> {
    cfg.validate()?;
    let question = tokenizer::tokenize(vocab, &record.question);
    let context = tokenizer::tokenize(vocab, &record.context);
    if question.len() + 3 >= cfg.max_length {
        return Err(FeatureError::QuestionTooLong {
            id: record.id.clone(),
            tokens: question.len(),
            max_length: cfg.max_length,
        });
    }
    let capacity = cfg.max_length - question.len() - 3;
    let answer = answer_token_span(&context, record);
    let prefix = question.len() + 2;

    window_starts(context.len(), capacity, cfg.doc_stride)?
        .into_iter()
        .map(|start| {
            let end = (start + capacity).min(context.len());
            let mut ids = Vec::with_capacity(cfg.max_length);
            ids.push(CLS_ID);
            ids.extend(&question.ids);
            ids.push(SEP_ID);
            ids.extend(&context.ids[start..end]);
            ids.push(SEP_ID);
            let active = ids.len();
            ids.resize(cfg.max_length, PAD_ID);

            let mut segment_ids = vec![0u8; cfg.max_length];
            segment_ids[prefix..active].fill(1);
            let mut attention_mask = vec![0u8; cfg.max_length];
            attention_mask[..active].fill(1);
            let mut offsets = vec![None; cfg.max_length];
            for (k, &off) in context.offsets[start..end].iter().enumerate() {
                offsets[prefix + k] = Some(off);
            }
            let (start_label, end_label) = match answer {
                Some((s, e)) if s >= start && e < end => (prefix + s - start, prefix + e - start),
                _ => (0, 0),
            };
            Ok(Feature {
                record_id: record.id.clone(),
                ids,
                attention_mask,
                segment_ids,
                offsets,
                start_label,
                end_label,
                window_start: start,
            })
        })
        .collect()
}

/// Seeded shuffle of `0..n` cut into contiguous batches; the last may be short.
pub fn batch_indices(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    epoch_batch_indices(n, batch_size, seed, 0)
}

/// Batches for one epoch; every epoch draws an independent permutation.
pub fn epoch_batch_indices(n: usize, batch_size: usize, seed: u64, epoch: u64) -> Vec<Vec<usize>> {
    assert!(batch_size >= 1, "batch_size must be at least 1");
    let mut order: Vec<usize> = (0..n).collect();
    rng::shuffle(&mut rng::stream(seed, "batches", epoch), &mut order);
    order.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

pub fn batch_features(features: &[Feature], batch_size: usize, seed: u64) -> Vec<Vec<Feature>> {
    batch_indices(features.len(), batch_size, seed)
        .into_iter()
        .map(|idx| idx.into_iter().map(|i| features[i].clone()).collect())
        .collect()
}

#[derive(Debug, Serialize, Deserialize, PartialEq, Eq)]
struct CacheHeader {
    vocab_hash: String,
    max_length: usize,
    doc_stride: usize,
    count: usize,
}

fn u32_of(v: usize) -> Result<u32, FeatureError> {
    u32::try_from(v).map_err(|_| FeatureError::Cache(format!("value {v} does not fit in u32")))
}

pub fn write_cache(path: &Path, vocab: &Vocab, cfg: &FeatureConfig, features: &[Feature]) -> Result<(), FeatureError> {
    let header = serde_json::to_vec(&CacheHeader {
        vocab_hash: vocab.hash(),
        max_length: cfg.max_length,
        doc_stride: cfg.doc_stride,
        count: features.len(),
    })
    .map_err(|e| FeatureError::Cache(e.to_string()))?;
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&u32_of(header.len())?.to_le_bytes())?;
    w.write_all(&header)?;
    let mut payload = Vec::new();
    for f in features {
        if f.len() != cfg.max_length {
            return Err(FeatureError::Cache(format!("feature of {} has length {}", f.record_id, f.len())));
        }
        payload.clear();
        payload.extend(u32_of(f.record_id.len())?.to_le_bytes());
        payload.extend(f.record_id.as_bytes());
        for v in [f.window_start, f.start_label, f.end_label] {
            payload.extend(u32_of(v)?.to_le_bytes());
        }
        for id in &f.ids {
            payload.extend(id.to_le_bytes());
        }
        payload.extend(&f.attention_mask);
        payload.extend(&f.segment_ids);
        for off in &f.offsets {
            let (s, e) = match off {
                Some((s, e)) => (u32_of(*s)?, u32_of(*e)?),
                None => (NO_OFFSET, NO_OFFSET),
            };
            payload.extend(s.to_le_bytes());
            payload.extend(e.to_le_bytes());
        }
        w.write_all(&u32_of(payload.len())?.to_le_bytes())?;
        w.write_all(&payload)?;
    }
    w.flush()?;
    Ok(())
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FeatureError> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len());
        let end = end.ok_or_else(|| FeatureError::Cache("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FeatureError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }
}

/// Reads a cache, refusing one built for another vocabulary or config.
pub fn read_cache(path: &Path, vocab: &Vocab, cfg: &FeatureConfig) -> Result<Vec<Feature>, FeatureError> {
    let mut buf = Vec::new();
    fs::File::open(path)?.read_to_end(&mut buf)?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(8)? != CACHE_MAGIC {
        return Err(FeatureError::Cache("bad magic".into()));
    }
    let header_len = c.u32()? as usize;
    let header: CacheHeader =
        serde_json::from_slice(c.take(header_len)?).map_err(|e| FeatureError::Cache(e.to_string()))?;
    if header.vocab_hash != vocab.hash() {
        return Err(FeatureError::Cache("vocabulary hash mismatch".into()));
    }
    if header.max_length != cfg.max_length || header.doc_stride != cfg.doc_stride {
        return Err(FeatureError::Cache("feature config mismatch".into()));
    }
    let n = cfg.max_length;
    let mut out = Vec::with_capacity(header.count);
    for _ in 0..header.count {
        let len = c.u32()? as usize;
        let mut p = Cursor { buf: c.take(len)?, pos: 0 };
        let id_len = p.u32()? as usize;
        let record_id = String::from_utf8(p.take(id_len)?.to_vec()).map_err(|e| FeatureError::Cache(e.to_string()))?;
        let window_start = p.u32()? as usize;
        let start_label = p.u32()? as usize;
        let end_label = p.u32()? as usize;
        let ids = (0..n).map(|_| p.u32()).collect::<Result<Vec<_>, _>>()?;
        let attention_mask = p.take(n)?.to_vec();
        let segment_ids = p.take(n)?.to_vec();
        let offsets = (0..n)
            .map(|_| {
                let (s, e) = (p.u32()?, p.u32()?);
                Ok(if s == NO_OFFSET { None } else { Some((s as usize, e as usize)) })
            })
            .collect::<Result<Vec<_>, FeatureError>>()?;
        out.push(Feature {
            record_id,
            ids,
            attention_mask,
            segment_ids,
            offsets,
            start_label,
            end_label,
            window_start,
        });
    }
    Ok(out)
}
