//! Ingestion of paired and unpaired text: tokenization, heuristic filtering,
//! exact-string dedup and n-gram extraction.
//!
//! Tokens are lowercased. Every CJK codepoint is its own token and maximal
//! runs of other alphanumeric codepoints form one token; everything else is
//! a separator. The same token space feeds the BM25 index, the matcher and
//! the metrics.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Token = String;

pub fn is_cjk(c: char) -> bool {
    matches!(c as u32,
        0x3040..=0x30FF       // hiragana, katakana
        | 0x3100..=0x312F     // bopomofo
        | 0x3400..=0x4DBF     // ext A
        | 0x4E00..=0x9FFF     // unified ideographs
        | 0xAC00..=0xD7AF     // hangul syllables
        | 0xF900..=0xFAFF     // compatibility ideographs
        | 0x20000..=0x2A6DF
        | 0x2A700..=0x2EBEF
        | 0x2F800..=0x2FA1F)
}

/// Splits `text` into tokens without validating the result. May be empty.
pub fn split_tokens(text: &str) -> Vec<Token> {
    let mut tokens = Vec::new();
    let mut run = String::new();
    for c in text.chars() {
        if is_cjk(c) {
            if !run.is_empty() {
                tokens.push(std::mem::take(&mut run));
            }
            tokens.extend(std::iter::once(c.to_lowercase().collect::<String>()));
        } else if c.is_alphanumeric() {
            run.extend(c.to_lowercase());
        } else if !run.is_empty() {
            tokens.push(std::mem::take(&mut run));
        }
    }
    if !run.is_empty() {
        tokens.push(run);
    }
    tokens
}

/// Tokenizes `text`, failing when nothing usable survives normalization.
pub fn tokenize(text: &str) -> Result<Vec<Token>> {
    let tokens = split_tokens(text);
    if tokens.is_empty() {
        Err(Error::UnusableSentence)
    } else {
        Ok(tokens)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    TooShort,
    TooLong,
    LowContentRatio,
    RepeatedToken,
    IdenticalSides,
}

impl fmt::Display for RejectReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            RejectReason::TooShort => "too_short",
            RejectReason::TooLong => "too_long",
            RejectReason::LowContentRatio => "low_content_ratio",
            RejectReason::RepeatedToken => "repeated_token",
            RejectReason::IdenticalSides => "identical_sides",
        };
        f.write_str(s)
    }
}

/// Thresholds for [`heuristic_filter`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterConfig {
    pub min_tokens: usize,
    pub max_tokens: usize,
    pub min_content_ratio: f64,
    pub max_token_run: usize,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            min_tokens: 2,
            max_tokens: 128,
            min_content_ratio: 0.7,
            max_token_run: 8,
        }
    }
}

/// Accepts or rejects a raw line. On acceptance the tokens are returned so
/// callers do not tokenize twice.
pub fn heuristic_filter(
    text: &str,
    cfg: &FilterConfig,
) -> std::result::Result<Vec<Token>, RejectReason> {
    let (mut visible, mut content) = (0usize, 0usize);
    for c in text.chars().filter(|c| !c.is_whitespace()) {
        visible += 1;
        if is_cjk(c) || c.is_alphanumeric() {
            content += 1;
        }
    }
    if visible == 0 {
        return Err(RejectReason::TooShort);
    }
    if (content as f64) < cfg.min_content_ratio * visible as f64 {
        return Err(RejectReason::LowContentRatio);
    }
    let tokens = split_tokens(text);
    if tokens.len() < cfg.min_tokens {
        return Err(RejectReason::TooShort);
    }
    if tokens.len() > cfg.max_tokens {
        return Err(RejectReason::TooLong);
    }
    let mut run = 1;
    for w in tokens.windows(2) {
        run = if w[0] == w[1] { run + 1 } else { 1 };
        if run > cfg.max_token_run {
            return Err(RejectReason::RepeatedToken);
        }
    }
    Ok(tokens)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub id: usize,
    pub raw: String,
    pub tokens: Vec<Token>,
}

impl Sentence {
    /// Builds a sentence from raw text; the text is trimmed and tokenized.
    pub fn new(id: usize, raw: &str) -> Result<Self> {
        let raw = raw.trim();
        Ok(Self {
            id,
            raw: raw.to_string(),
            tokens: tokenize(raw)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedExample {
    pub id: usize,
    pub post: Sentence,
    pub response: Sentence,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct LoadReport {
    pub lines: usize,
    pub loaded: usize,
    pub deduped: usize,
    pub rejected: BTreeMap<String, usize>,
}

impl LoadReport {
    fn reject(&mut self, reason: RejectReason) {
        *self.rejected.entry(reason.to_string()).or_default() += 1;
    }

    pub fn rejected_total(&self) -> usize {
        self.rejected.values().sum()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct UnpairedDataset {
    pub items: Vec<Sentence>,
    pub source_path: String,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct PairedDataset {
    pub items: Vec<PairedExample>,
    pub source_path: String,
}

impl UnpairedDataset {
    /// Filters and dedups `texts` in order. Ids follow surviving order.
    pub fn from_texts<I, S>(texts: I, cfg: &FilterConfig) -> (Self, LoadReport)
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut report = LoadReport::default();
        let mut seen = HashSet::new();
        let mut items = Vec::new();
        for text in texts {
            report.lines += 1;
            let raw = text.as_ref().trim();
            let tokens = match heuristic_filter(raw, cfg) {
                Ok(t) => t,
                Err(reason) => {
                    log::debug!("rejected {raw:?}: {reason}");
                    report.reject(reason);
                    continue;
                }
            };
            if !seen.insert(raw.to_string()) {
                report.deduped += 1;
                continue;
            }
            items.push(Sentence {
                id: items.len(),
                raw: raw.to_string(),
                tokens,
            });
        }
        report.loaded = items.len();
        (
            Self {
                items,
                source_path: String::new(),
            },
            report,
        )
    }

    pub fn load(path: impl AsRef<Path>, cfg: &FilterConfig) -> Result<(Self, LoadReport)> {
        #[derive(Deserialize)]
        struct Line {
            text: String,
        }
        let path = path.as_ref();
        let texts: Vec<String> = read_jsonl::<Line>(path)?
            .into_iter()
            .map(|l| l.text)
            .collect();
        let (mut ds, report) = Self::from_texts(texts, cfg);
        finish_load(path, &report)?;
        ds.source_path = path.display().to_string();
        Ok((ds, report))
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

impl PairedDataset {
    pub fn from_pairs<I, S, T>(pairs: I, cfg: &FilterConfig) -> (Self, LoadReport)
    where
        I: IntoIterator<Item = (S, T)>,
        S: AsRef<str>,
        T: AsRef<str>,
    {
        let mut report = LoadReport::default();
        let mut seen = HashSet::new();
        let mut items = Vec::new();
        for (post, response) in pairs {
            report.lines += 1;
            let (post, response) = (post.as_ref().trim(), response.as_ref().trim());
            let checked = heuristic_filter(post, cfg)
                .and_then(|p| heuristic_filter(response, cfg).map(|r| (p, r)));
            let (post_tokens, response_tokens) = match checked {
                Ok(t) => t,
                Err(reason) => {
                    report.reject(reason);
                    continue;
                }
            };
            if post == response {
                report.reject(RejectReason::IdenticalSides);
                continue;
            }
            if !seen.insert((post.to_string(), response.to_string())) {
                report.deduped += 1;
                continue;
            }
            let id = items.len();
            items.push(PairedExample {
                id,
                post: Sentence {
                    id,
                    raw: post.to_string(),
                    tokens: post_tokens,
                },
                response: Sentence {
                    id,
                    raw: response.to_string(),
                    tokens: response_tokens,
                },
            });
        }
        report.loaded = items.len();
        (
            Self {
                items,
                source_path: String::new(),
            },
            report,
        )
    }

    pub fn load(path: impl AsRef<Path>, cfg: &FilterConfig) -> Result<(Self, LoadReport)> {
        #[derive(Deserialize)]
        struct Line {
            post: String,
            response: String,
        }
        let path = path.as_ref();
        let lines: Vec<Line> = read_jsonl(path)?;
        let (mut ds, report) = Self::from_pairs(lines.into_iter().map(|l| (l.post, l.response)), cfg);
        finish_load(path, &report)?;
        ds.source_path = path.display().to_string();
        Ok((ds, report))
    }

    /// Unfiltered construction from already-tokenized examples, re-numbering ids.
    pub fn from_examples(examples: impl IntoIterator<Item = PairedExample>) -> Self {
        let items = examples
            .into_iter()
            .enumerate()
            .map(|(id, mut ex)| {
                ex.id = id;
                ex
            })
            .collect();
        Self {
            items,
            source_path: String::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}

fn finish_load(path: &Path, report: &LoadReport) -> Result<()> {
    log::debug!(
        "{}: {} lines, loaded {}, deduped {}, rejected {}",
        path.display(),
        report.lines,
        report.loaded,
        report.deduped,
        report.rejected_total()
    );
    if report.loaded == 0 {
        return Err(Error::ZeroAccepted(path.to_path_buf()));
    }
    Ok(())
}

/// Reads one JSON value per non-blank line. A leading BOM is ignored.
pub fn read_jsonl<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let text = text.strip_prefix('\u{feff}').unwrap_or(&text);
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value = serde_json::from_str(line).map_err(|e| Error::MalformedLine {
            path: PathBuf::from(path),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(value);
    }
    Ok(out)
}

/// Contiguous n-token windows. Empty when the sequence is shorter than `n`.
pub fn ngrams<T>(tokens: &[T], n: usize) -> impl Iterator<Item = &[T]> {
    assert!(n >= 1, "n-gram order must be at least 1");
    tokens.windows(n)
}

/// Multiset of n-grams with their multiplicities.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct NgramCounts<'a> {
    pub counts: HashMap<&'a [Token], usize>,
}

impl<'a> NgramCounts<'a> {
    pub fn add(&mut self, tokens: &'a [Token], n: usize) {
        for g in ngrams(tokens, n) {
            *self.counts.entry(g).or_default() += 1;
        }
    }

    pub fn total(&self) -> usize {
        self.counts.values().sum()
    }

    pub fn unique(&self) -> usize {
        self.counts.len()
    }
}

pub fn ngram_set(tokens: &[Token], n: usize) -> NgramCounts<'_> {
    let mut c = NgramCounts::default();
    c.add(tokens, n);
    c
}
