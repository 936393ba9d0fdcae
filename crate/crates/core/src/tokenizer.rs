//! Word-piece tokenization with code-point offsets.
//!
//! Text is split on Unicode whitespace, then each word is segmented greedily,
//! longest match first. Non-initial pieces carry the `##` prefix. A word that
//! cannot be fully segmented, or that is longer than [`MAX_WORD_CHARS`], becomes
//! a single `[UNK]` spanning the whole word. No case folding or normalization
//! is applied.

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use sha2::{Digest, Sha256};
use thiserror::Error;

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const CLS_ID: u32 = 2;
pub const SEP_ID: u32 = 3;
pub const SPECIAL_PIECES: [&str; 4] = ["[PAD]", "[UNK]", "[CLS]", "[SEP]"];
pub const CONTINUATION: &str = "##";
pub const MAX_WORD_CHARS: usize = 100;

#[derive(Debug, Error)]
pub enum TokenizerError {
    #[error("vocabulary size {size} is too small, need at least {required}")]
    SizeTooSmall { size: usize, required: usize },
    #[error("vocabulary file {path}: {message}")]
    InvalidVocabFile { path: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    pieces: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocab {
    /// Builds a vocabulary from pieces that follow the four reserved specials.
    pub fn from_pieces<I, S>(pieces: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut vocab = Vocab { pieces: Vec::new(), index: HashMap::new() };
        for p in SPECIAL_PIECES {
            vocab.push(p.to_string());
        }
        for p in pieces {
            vocab.push(p.into());
        }
        vocab
    }

    fn push(&mut self, piece: String) -> bool {
        if self.index.contains_key(&piece) {
            return false;
        }
        self.index.insert(piece.clone(), self.pieces.len() as u32);
        self.pieces.push(piece);
        true
    }

    pub fn len(&self) -> usize {
        self.pieces.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pieces.is_empty()
    }

    pub fn id(&self, piece: &str) -> Option<u32> {
        self.index.get(piece).copied()
    }

    pub fn piece(&self, id: u32) -> Option<&str> {
        self.pieces.get(id as usize).map(String::as_str)
    }

    pub fn pieces(&self) -> &[String] {
        &self.pieces
    }

    /// Hex SHA-256 over the newline-joined pieces; identifies the vocabulary
    /// in feature caches.
    pub fn hash(&self) -> String {
        let mut h = Sha256::new();
        for p in &self.pieces {
            h.update(p.as_bytes());
            h.update(b"\n");
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }

    /// One piece per line; the line number is the id.
    pub fn load(path: &Path) -> Result<Self, TokenizerError> {
        let text = fs::read_to_string(path)?;
        let invalid = |message: String| TokenizerError::InvalidVocabFile { path: path.display().to_string(), message };
        let lines: Vec<&str> = text.lines().collect();
        for (i, special) in SPECIAL_PIECES.iter().enumerate() {
            if lines.get(i) != Some(special) {
                return Err(invalid(format!("line {i} must be {special}")));
            }
        }
        let mut vocab = Vocab::from_pieces(std::iter::empty::<String>());
        for (i, line) in lines.iter().enumerate().skip(SPECIAL_PIECES.len()) {
            if line.is_empty() || line.chars().any(char::is_whitespace) {
                return Err(invalid(format!("line {i} is not a valid piece")));
            }
            if !vocab.push(line.to_string()) {
                return Err(invalid(format!("line {i} duplicates piece {line:?}")));
            }
        }
        Ok(vocab)
    }

    pub fn save(&self, path: &Path) -> std::io::Result<()> {
        let mut f = std::io::BufWriter::new(fs::File::create(path)?);
        for p in &self.pieces {
            writeln!(f, "{p}")?;
        }
        f.flush()
    }
}

/// Token ids with half-open code-point offsets into the source text.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Encoding {
    pub ids: Vec<u32>,
    pub offsets: Vec<(usize, usize)>,
    pub word_boundaries: Vec<bool>,
}

impl Encoding {
    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }
}

/// Code-point ranges of whitespace-separated words.
pub fn word_spans(chars: &[char]) -> Vec<(usize, usize)> {
    let mut spans = Vec::new();
    let mut start = None;
    for (i, c) in chars.iter().enumerate() {
        match (c.is_whitespace(), start) {
            (true, Some(s)) => {
                spans.push((s, i));
                start = None;
            }
            (false, None) => start = Some(i),
            _ => {}
        }
    }
    if let Some(s) = start {
        spans.push((s, chars.len()));
    }
    spans
}

pub fn tokenize(vocab: &Vocab, text: &str) -> Encoding {
    let chars: Vec<char> = text.chars().collect();
    let mut enc = Encoding::default();
    let mut buf = String::new();
    for (ws, we) in word_spans(&chars) {
        let mark = enc.len();
        let mut ok = we - ws <= MAX_WORD_CHARS;
        let mut start = ws;
        while ok && start < we {
            let mut matched = None;
            for end in (start + 1..=we).rev() {
                buf.clear();
                if start > ws {
                    buf.push_str(CONTINUATION);
                }
                buf.extend(&chars[start..end]);
                if let Some(id) = vocab.id(&buf) {
                    matched = Some((id, end));
                    break;
                }
            }
            match matched {
                Some((id, end)) => {
                    enc.ids.push(id);
                    enc.offsets.push((start, end));
                    enc.word_boundaries.push(start == ws);
                    start = end;
                }
                None => ok = false,
            }
        }
        if !ok {
            enc.ids.truncate(mark);
            enc.offsets.truncate(mark);
            enc.word_boundaries.truncate(mark);
            enc.ids.push(UNK_ID);
            enc.offsets.push((ws, we));
            enc.word_boundaries.push(true);
        }
    }
    enc
}

fn split_word(word: &str) -> Vec<String> {
    word.chars().enumerate().map(|(i, c)| if i == 0 { c.to_string() } else { format!("{CONTINUATION}{c}") }).collect()
}

/// Induces a word-piece vocabulary of at most `size` entries.
///
/// The alphabet always contains one piece per distinct code point (its
/// word-initial form when the code point ever starts a word, otherwise its
/// `##` form); remaining alphabet forms are admitted by frequency. Then the
/// most frequent adjacent in-word pair is merged repeatedly, ties going to the
/// lexicographically smallest `(left, right)`, until the vocabulary is full or
/// no pair remains.
pub fn build_vocab<S: AsRef<str>>(corpus: &[S], size: usize) -> Result<Vocab, TokenizerError> {
    let mut word_counts: BTreeMap<&str, usize> = BTreeMap::new();
    for text in corpus {
        for w in text.as_ref().split_whitespace() {
            *word_counts.entry(w).or_default() += 1;
        }
    }
    let mut words: Vec<(Vec<String>, usize)> = word_counts.iter().map(|(w, &n)| (split_word(w), n)).collect();

    let mut form_freq: BTreeMap<String, usize> = BTreeMap::new();
    let mut initial: BTreeMap<char, bool> = BTreeMap::new();
    for (syms, n) in &words {
        for (i, s) in syms.iter().enumerate() {
            *form_freq.entry(s.clone()).or_default() += n;
            let c = s.chars().last().unwrap();
            let e = initial.entry(c).or_insert(false);
            *e |= i == 0;
        }
    }
    let required_len = SPECIAL_PIECES.len() + initial.len();
    if size < required_len {
        return Err(TokenizerError::SizeTooSmall { size, required: required_len });
    }
    let mut alphabet: Vec<String> = initial
        .iter()
        .map(|(c, &is_initial)| if is_initial { c.to_string() } else { format!("{CONTINUATION}{c}") })
        .collect();
    let mut optional: Vec<(&String, usize)> =
        form_freq.iter().filter(|(f, _)| !alphabet.contains(f)).map(|(f, &n)| (f, n)).collect();
    optional.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(b.0)));
    let room = size - required_len;
    alphabet.extend(optional.into_iter().take(room).map(|(f, _)| f.clone()));
    alphabet.sort();

    let mut vocab = Vocab::from_pieces(alphabet);
    while vocab.len() < size {
        let mut pairs: BTreeMap<(&str, &str), usize> = BTreeMap::new();
        for (syms, n) in &words {
            for w in syms.windows(2) {
                *pairs.entry((w[0].as_str(), w[1].as_str())).or_default() += n;
            }
        }
        // BTreeMap iteration is lexicographic, so the first maximum wins ties.
        let Some(((left, right), _)) = pairs
            .iter()
            .fold(None::<(&(&str, &str), usize)>, |best, (k, &n)| match best {
                Some((_, m)) if m >= n => best,
                _ => Some((k, n)),
            })
            .map(|(k, n)| (*k, n))
        else {
            break;
        };
        let (left, right) = (left.to_string(), right.to_string());
        let merged = format!("{left}{}", &right[CONTINUATION.len()..]);
        for (syms, _) in &mut words {
            let mut i = 0;
            while i + 1 < syms.len() {
                if syms[i] == left && syms[i + 1] == right {
                    syms[i] = merged.clone();
                    syms.remove(i + 1);
                }
                i += 1;
            }
        }
        vocab.push(merged);
    }
    Ok(vocab)
}
