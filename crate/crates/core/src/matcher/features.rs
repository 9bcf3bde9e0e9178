use std::collections::HashSet;

use crate::corpus::Token;

pub const DEFAULT_DIM: usize = 1 << 18;
/// Dense slots sit at the front of the feature space; hashed features follow.
pub const DENSE_SLOTS: usize = 4;
pub const MAX_CROSS_PAIRS: usize = 256;

pub const SLOT_UNIGRAM_JACCARD: usize = 0;
pub const SLOT_BIGRAM_JACCARD: usize = 1;
pub const SLOT_LEN_GAP: usize = 2;
pub const SLOT_LEN_RATIO: usize = 3;

const SEP: u8 = 0x1f;

/// Sparse feature vector sorted by index, with duplicate indices merged.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureVector {
    pub entries: Vec<(u32, f64)>,
}

impl FeatureVector {
    pub fn get(&self, index: usize) -> f64 {
        self.entries
            .binary_search_by_key(&(index as u32), |e| e.0)
            .map(|i| self.entries[i].1)
            .unwrap_or(0.0)
    }

    pub fn dot(&self, weights: &[f64]) -> f64 {
        self.entries
            .iter()
            .map(|&(i, v)| weights[i as usize] * v)
            .sum()
    }

    pub fn indices(&self) -> impl Iterator<Item = usize> + '_ {
        self.entries.iter().map(|e| e.0 as usize)
    }
}

pub fn fnv1a64(bytes: impl IntoIterator<Item = u8>) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

fn hash_feature(namespace: u8, parts: &[&str], dim: usize) -> u32 {
    let mut bytes = vec![namespace];
    for p in parts {
        bytes.push(SEP);
        bytes.extend_from_slice(p.as_bytes());
    }
    let h = fnv1a64(bytes);
    (DENSE_SLOTS as u64 + h % (dim - DENSE_SLOTS) as u64) as u32
}

/// Adds one namespace block, L2-normalized so that every block contributes
/// unit norm regardless of sentence length.
fn push_block(out: &mut Vec<(u32, f64)>, mut idx: Vec<u32>) {
    if idx.is_empty() {
        return;
    }
    idx.sort_unstable();
    let mut counts: Vec<(u32, f64)> = Vec::new();
    for i in idx {
        match counts.last_mut() {
            Some(last) if last.0 == i => last.1 += 1.0,
            _ => counts.push((i, 1.0)),
        }
    }
    let norm = counts.iter().map(|c| c.1 * c.1).sum::<f64>().sqrt();
    out.extend(counts.into_iter().map(|(i, c)| (i, c / norm)));
}

fn side_block(namespace: u8, tokens: &[Token], dim: usize) -> Vec<u32> {
    let uni = tokens.iter().map(|t| hash_feature(namespace, &[t], dim));
    let bi = tokens
        .windows(2)
        .map(|w| hash_feature(namespace, &[&w[0], &w[1]], dim));
    uni.chain(bi).collect()
}

fn distinct_in_order(tokens: &[Token]) -> Vec<&str> {
    let mut seen = HashSet::new();
    tokens
        .iter()
        .filter(|t| seen.insert(t.as_str()))
        .map(String::as_str)
        .collect()
}

fn jaccard<T: std::hash::Hash + Eq>(a: &HashSet<T>, b: &HashSet<T>) -> f64 {
    let union = a.union(b).count();
    if union == 0 {
        0.0
    } else {
        a.intersection(b).count() as f64 / union as f64
    }
}

/// Pair features for the matcher.
///
/// Namespaces: `P` post unigrams+bigrams, `R` response unigrams+bigrams,
/// `C` post×response unigram pairs (distinct tokens, post-major order, first
/// 256 pairs). Dense slots: unigram Jaccard, bigram Jaccard,
/// |len(post) − len(response)|/64 clamped to [0,1], min(len)/max(len).
pub fn featurize(post: &[Token], response: &[Token], dim: usize) -> FeatureVector {
    assert!(dim > DENSE_SLOTS, "feature space too small");
    let mut entries = Vec::new();

    let pu: HashSet<&Token> = post.iter().collect();
    let ru: HashSet<&Token> = response.iter().collect();
    let pb: HashSet<&[Token]> = post.windows(2).collect();
    let rb: HashSet<&[Token]> = response.windows(2).collect();
    let (lp, lr) = (post.len() as f64, response.len() as f64);
    let dense = [
        jaccard(&pu, &ru),
        jaccard(&pb, &rb),
        ((lp - lr).abs() / 64.0).clamp(0.0, 1.0),
        if lp.max(lr) > 0.0 { lp.min(lr) / lp.max(lr) } else { 0.0 },
    ];
    for (slot, v) in dense.into_iter().enumerate() {
        if v != 0.0 {
            entries.push((slot as u32, v));
        }
    }

    push_block(&mut entries, side_block(b'P', post, dim));
    push_block(&mut entries, side_block(b'R', response, dim));

    let post_terms = distinct_in_order(post);
    let resp_terms = distinct_in_order(response);
    let cross: Vec<u32> = post_terms
        .iter()
        .flat_map(|p| resp_terms.iter().map(move |r| (*p, *r)))
        .take(MAX_CROSS_PAIRS)
        .map(|(p, r)| hash_feature(b'C', &[p, r], dim))
        .collect();
    push_block(&mut entries, cross);

    // merge collisions across blocks
    entries.sort_by_key(|e| e.0);
    let mut merged: Vec<(u32, f64)> = Vec::with_capacity(entries.len());
    for (i, v) in entries {
        match merged.last_mut() {
            Some(last) if last.0 == i => last.1 += v,
            _ => merged.push((i, v)),
        }
    }
    FeatureVector { entries: merged }
}
