//! Okapi BM25 over an in-memory inverted index.
//!
//! ```text
//! score(q, d) = Σ_{t ∈ q} idf(t) · tf·(k1 + 1) / (tf + k1·(1 − b + b·|d|/avg_len))
//! idf(t)      = ln(1 + (N − df + 0.5) / (df + 0.5))
//! ```
//!
//! Query tokens are summed as given, so a repeated query token counts twice.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::corpus::Token;
use crate::error::{Error, Result};

const SNAPSHOT_MAGIC: &[u8; 8] = b"DDBM25IX";
const SNAPSHOT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Self { k1: 1.2, b: 0.75 }
    }
}

impl Bm25Params {
    pub fn validate(&self) -> Result<()> {
        if !(self.k1 >= 0.0 && self.k1.is_finite()) || !(0.0..=1.0).contains(&self.b) {
            return Err(Error::InvalidConfig(format!(
                "bm25 params out of range: k1={} b={}",
                self.k1, self.b
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Posting {
    pub doc_id: u32,
    pub tf: u32,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RankedHit {
    pub doc_id: usize,
    pub score: f64,
}

pub fn idf(doc_count: usize, df: usize) -> f64 {
    let (n, df) = (doc_count as f64, df as f64);
    (1.0 + (n - df + 0.5) / (df + 0.5)).ln()
}

#[inline]
fn term_weight(idf: f64, tf: u32, doc_len: u32, avg_len: f64, p: &Bm25Params) -> f64 {
    let tf = tf as f64;
    let norm = 1.0 - p.b + p.b * doc_len as f64 / avg_len;
    idf * tf * (p.k1 + 1.0) / (tf + p.k1 * norm)
}

fn rank_order(a: &RankedHit, b: &RankedHit) -> std::cmp::Ordering {
    b.score.total_cmp(&a.score).then(a.doc_id.cmp(&b.doc_id))
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bm25Index {
    terms: HashMap<Token, u32>,
    term_text: Vec<Token>,
    postings: Vec<Vec<Posting>>,
    idf: Vec<f64>,
    doc_len: Vec<u32>,
    avg_len: f64,
    params: Bm25Params,
}

impl Bm25Index {
    pub fn build<D: AsRef<[Token]>>(docs: &[D], params: Bm25Params) -> Result<Self> {
        params.validate()?;
        if docs.is_empty() {
            return Err(Error::InvalidInput("cannot index an empty corpus".into()));
        }
        let mut terms: HashMap<Token, u32> = HashMap::new();
        let mut term_text = Vec::new();
        let mut postings: Vec<Vec<Posting>> = Vec::new();
        let mut doc_len = Vec::with_capacity(docs.len());
        let mut tf: HashMap<u32, u32> = HashMap::new();
        for (doc_id, doc) in docs.iter().enumerate() {
            let doc = doc.as_ref();
            doc_len.push(doc.len() as u32);
            tf.clear();
            let mut order = Vec::new();
            for tok in doc {
                let tid = *terms.entry(tok.clone()).or_insert_with(|| {
                    term_text.push(tok.clone());
                    postings.push(Vec::new());
                    (term_text.len() - 1) as u32
                });
                let c = tf.entry(tid).or_insert(0);
                if *c == 0 {
                    order.push(tid);
                }
                *c += 1;
            }
            for tid in order {
                postings[tid as usize].push(Posting {
                    doc_id: doc_id as u32,
                    tf: tf[&tid],
                });
            }
        }
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avg_len = total as f64 / docs.len() as f64;
        Ok(Self::assemble(terms, term_text, postings, doc_len, avg_len, params))
    }

    fn assemble(
        terms: HashMap<Token, u32>,
        term_text: Vec<Token>,
        postings: Vec<Vec<Posting>>,
        doc_len: Vec<u32>,
        avg_len: f64,
        params: Bm25Params,
    ) -> Self {
        let n = doc_len.len();
        let idf = postings.iter().map(|p| idf(n, p.len())).collect();
        Self {
            terms,
            term_text,
            postings,
            idf,
            doc_len,
            avg_len,
            params,
        }
    }

    pub fn doc_count(&self) -> usize {
        self.doc_len.len()
    }

    pub fn avg_len(&self) -> f64 {
        self.avg_len
    }

    pub fn params(&self) -> Bm25Params {
        self.params
    }

    pub fn doc_len(&self, doc_id: usize) -> Option<usize> {
        self.doc_len.get(doc_id).map(|&l| l as usize)
    }

    pub fn postings(&self, term: &str) -> Option<&[Posting]> {
        self.terms
            .get(term)
            .map(|&t| self.postings[t as usize].as_slice())
    }

    pub fn term_idf(&self, term: &str) -> Option<f64> {
        self.terms.get(term).map(|&t| self.idf[t as usize])
    }

    pub fn vocabulary(&self) -> impl Iterator<Item = &str> {
        self.term_text.iter().map(String::as_str)
    }

    pub fn score(&self, query: &[Token], doc_id: usize) -> Result<f64> {
        let len = *self.doc_len.get(doc_id).ok_or(Error::UnknownDoc {
            doc_id,
            doc_count: self.doc_count(),
        })?;
        let mut total = 0.0;
        for tok in query {
            let Some(&tid) = self.terms.get(tok) else {
                continue;
            };
            let list = &self.postings[tid as usize];
            if let Ok(pos) = list.binary_search_by_key(&(doc_id as u32), |p| p.doc_id) {
                total += term_weight(
                    self.idf[tid as usize],
                    list[pos].tf,
                    len,
                    self.avg_len,
                    &self.params,
                );
            }
        }
        Ok(total)
    }

    /// Best `k` documents by (score desc, doc_id asc). Documents in `exclude`
    /// and documents sharing no term with the query are never returned.
    pub fn top_k(&self, query: &[Token], k: usize, exclude: &HashSet<usize>) -> Vec<RankedHit> {
        if k == 0 {
            return Vec::new();
        }
        let mut acc: HashMap<u32, f64> = HashMap::new();
        let mut touched = Vec::new();
        for tok in query {
            let Some(&tid) = self.terms.get(tok) else {
                continue;
            };
            let w = self.idf[tid as usize];
            for p in &self.postings[tid as usize] {
                let contrib = term_weight(
                    w,
                    p.tf,
                    self.doc_len[p.doc_id as usize],
                    self.avg_len,
                    &self.params,
                );
                let slot = acc.entry(p.doc_id).or_insert_with(|| {
                    touched.push(p.doc_id);
                    0.0
                });
                *slot += contrib;
            }
        }
        let mut hits: Vec<RankedHit> = touched
            .into_iter()
            .filter(|d| !exclude.contains(&(*d as usize)))
            .map(|d| RankedHit {
                doc_id: d as usize,
                score: acc[&d],
            })
            .filter(|h| h.score > 0.0)
            .collect();
        if hits.len() > k {
            hits.select_nth_unstable_by(k - 1, rank_order);
            hits.truncate(k);
        }
        hits.sort_by(rank_order);
        hits
    }

    /// Writes a versioned little-endian snapshot.
    ///
    /// Layout: magic, version u32, doc_count u64, avg_len f64, k1 f64, b f64,
    /// doc_len u32 × doc_count, term_count u64, then per term: byte length u32,
    /// utf-8 bytes, posting count u32, (doc_id u32, tf u32) × count.
    pub fn write_snapshot<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(SNAPSHOT_MAGIC)?;
        w.write_all(&SNAPSHOT_VERSION.to_le_bytes())?;
        w.write_all(&(self.doc_count() as u64).to_le_bytes())?;
        w.write_all(&self.avg_len.to_le_bytes())?;
        w.write_all(&self.params.k1.to_le_bytes())?;
        w.write_all(&self.params.b.to_le_bytes())?;
        for &l in &self.doc_len {
            w.write_all(&l.to_le_bytes())?;
        }
        w.write_all(&(self.term_text.len() as u64).to_le_bytes())?;
        for (text, list) in self.term_text.iter().zip(&self.postings) {
            w.write_all(&(text.len() as u32).to_le_bytes())?;
            w.write_all(text.as_bytes())?;
            w.write_all(&(list.len() as u32).to_le_bytes())?;
            for p in list {
                w.write_all(&p.doc_id.to_le_bytes())?;
                w.write_all(&p.tf.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_snapshot<R: Read>(mut r: R) -> Result<Self> {
        let mut magic = [0u8; 8];
        read_exact(&mut r, &mut magic)?;
        if &magic != SNAPSHOT_MAGIC {
            return Err(Error::Snapshot("bad magic".into()));
        }
        let version = read_u32(&mut r)?;
        if version != SNAPSHOT_VERSION {
            return Err(Error::Snapshot(format!("unsupported version {version}")));
        }
        let doc_count = read_u64(&mut r)? as usize;
        let avg_len = read_f64(&mut r)?;
        let params = Bm25Params {
            k1: read_f64(&mut r)?,
            b: read_f64(&mut r)?,
        };
        let doc_len = (0..doc_count)
            .map(|_| read_u32(&mut r))
            .collect::<Result<Vec<_>>>()?;
        let term_count = read_u64(&mut r)? as usize;
        let mut terms = HashMap::with_capacity(term_count);
        let mut term_text = Vec::with_capacity(term_count);
        let mut postings = Vec::with_capacity(term_count);
        for tid in 0..term_count {
            let len = read_u32(&mut r)? as usize;
            let mut bytes = vec![0u8; len];
            read_exact(&mut r, &mut bytes)?;
            let text =
                String::from_utf8(bytes).map_err(|_| Error::Snapshot("term is not utf-8".into()))?;
            let n = read_u32(&mut r)? as usize;
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                let doc_id = read_u32(&mut r)?;
                if doc_id as usize >= doc_count {
                    return Err(Error::Snapshot(format!("posting for unknown doc {doc_id}")));
                }
                list.push(Posting {
                    doc_id,
                    tf: read_u32(&mut r)?,
                });
            }
            terms.insert(text.clone(), tid as u32);
            term_text.push(text);
            postings.push(list);
        }
        Ok(Self::assemble(terms, term_text, postings, doc_len, avg_len, params))
    }
}

fn read_exact<R: Read>(r: &mut R, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|e| Error::Snapshot(format!("truncated: {e}")))
}

fn read_u32<R: Read>(r: &mut R) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

/// Reference ranking that recounts every statistic from `docs` and scores
/// each document independently of the inverted index.
pub fn brute_force_top_k<D: AsRef<[Token]>>(
    docs: &[D],
    params: Bm25Params,
    query: &[Token],
    k: usize,
) -> Vec<RankedHit> {
    let n = docs.len();
    if n == 0 {
        return Vec::new();
    }
    let avg_len = docs.iter().map(|d| d.as_ref().len()).sum::<usize>() as f64 / n as f64;
    let df = |t: &Token| docs.iter().filter(|d| d.as_ref().contains(t)).count();
    let mut hits: Vec<RankedHit> = docs
        .iter()
        .enumerate()
        .map(|(doc_id, d)| {
            let d = d.as_ref();
            let mut score = 0.0;
            for t in query {
                let tf = d.iter().filter(|x| *x == t).count();
                if tf == 0 {
                    continue;
                }
                let tf = tf as f64;
                let w = (1.0 + (n as f64 - df(t) as f64 + 0.5) / (df(t) as f64 + 0.5)).ln();
                let norm = 1.0 - params.b + params.b * d.len() as f64 / avg_len;
                score += w * tf * (params.k1 + 1.0) / (tf + params.k1 * norm);
            }
            RankedHit { doc_id, score }
        })
        .filter(|h| h.score > 0.0)
        .collect();
    hits.sort_by(rank_order);
    hits.truncate(k);
    hits
}
