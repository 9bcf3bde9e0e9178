//! Automatic evaluation: corpus diversity (Distinct-n, Novelty-n), response
//! selection (MAP, R10@k), and generation quality (PPL, BLEU-n).

use std::collections::{BTreeMap, HashSet};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{ngram_set, ngrams, NgramCounts, PairedDataset, PairedExample, Sentence, Token};
use crate::error::{Error, Result};
use crate::matcher::PairScorer;
use crate::model::{gen_nll, WindowLm};

/// A metric value with the counts it came from, when it is a ratio.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricValue {
    pub value: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub numerator: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub denominator: Option<f64>,
}

impl MetricValue {
    pub fn ratio(numerator: f64, denominator: f64) -> Self {
        Self {
            value: numerator / denominator,
            numerator: Some(numerator),
            denominator: Some(denominator),
        }
    }

    pub fn counted(value: f64, numerator: f64, denominator: f64) -> Self {
        Self {
            value,
            numerator: Some(numerator),
            denominator: Some(denominator),
        }
    }

    pub fn plain(value: f64) -> Self {
        Self {
            value,
            numerator: None,
            denominator: None,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct MetricsReport {
    pub values: BTreeMap<String, MetricValue>,
}

impl MetricsReport {
    pub fn insert(&mut self, name: impl Into<String>, v: MetricValue) {
        self.values.insert(name.into(), v);
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.values.get(name).map(|v| v.value)
    }
}

fn pooled<'a, S: AsRef<[Token]> + 'a>(corpus: &'a [S], n: usize) -> NgramCounts<'a> {
    let mut counts = NgramCounts::default();
    for s in corpus {
        counts.add(s.as_ref(), n);
    }
    counts
}

/// Unique n-grams over total n-grams, pooled over the corpus.
pub fn distinct_n<S: AsRef<[Token]>>(corpus: &[S], n: usize) -> Result<MetricValue> {
    let counts = pooled(corpus, n);
    let total = counts.total();
    if total == 0 {
        return Err(Error::InvalidInput(format!("no {n}-grams in corpus")));
    }
    Ok(MetricValue::ratio(counts.unique() as f64, total as f64))
}

/// Share of the augmented corpus's unique n-grams that never occur in the
/// reference corpus.
pub fn novelty_n<S: AsRef<[Token]>, R: AsRef<[Token]>>(augmented: &[S], reference: &[R], n: usize) -> Result<MetricValue> {
    let aug = pooled(augmented, n);
    if aug.unique() == 0 {
        return Err(Error::InvalidInput(format!("no {n}-grams in augmented corpus")));
    }
    let seen: HashSet<&[Token]> = reference.iter().flat_map(|r| ngrams(r.as_ref(), n)).collect();
    let new = aug.counts.keys().filter(|g| !seen.contains(*g)).count();
    Ok(MetricValue::ratio(new as f64, aug.unique() as f64))
}

/// exp(total response NLL / total response tokens incl. EOS).
pub fn perplexity(model: &WindowLm, pairs: &[PairedExample]) -> Result<f64> {
    Ok(perplexity_value(model, pairs)?.value)
}

pub fn perplexity_value(model: &WindowLm, pairs: &[PairedExample]) -> Result<MetricValue> {
    if pairs.is_empty() {
        return Err(Error::InvalidInput("perplexity over an empty set".into()));
    }
    let nll: f64 = pairs.iter().map(|p| gen_nll(model, p)).sum();
    let tokens: usize = pairs.iter().map(|p| p.response.tokens.len() + 1).sum();
    Ok(MetricValue {
        value: (nll / tokens as f64).exp(),
        numerator: Some(nll),
        denominator: Some(tokens as f64),
    })
}

/// Corpus-level clipped n-gram precision times the brevity penalty
/// min(1, exp(1 − ref_len/hyp_len)), one reference per hypothesis.
pub fn bleu_n<H: AsRef<[Token]>, R: AsRef<[Token]>>(hypotheses: &[H], references: &[R], n: usize) -> Result<MetricValue> {
    if hypotheses.is_empty() {
        return Err(Error::InvalidInput("no hypotheses".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::InvalidInput(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    let (mut clipped, mut total, mut hyp_len, mut ref_len) = (0usize, 0usize, 0usize, 0usize);
    for (h, r) in hypotheses.iter().zip(references) {
        let (h, r) = (h.as_ref(), r.as_ref());
        hyp_len += h.len();
        ref_len += r.len();
        let hc = ngram_set(h, n);
        let rc = ngram_set(r, n);
        total += hc.total();
        clipped += hc
            .counts
            .iter()
            .map(|(g, c)| (*c).min(rc.counts.get(g).copied().unwrap_or(0)))
            .sum::<usize>();
    }
    if total == 0 {
        return Ok(MetricValue::counted(0.0, 0.0, 0.0));
    }
    let bp = (1.0 - ref_len as f64 / hyp_len as f64).exp().min(1.0);
    Ok(MetricValue {
        value: clipped as f64 / total as f64 * bp,
        numerator: Some(clipped as f64),
        denominator: Some(total as f64),
    })
}

pub const RANKING_CANDIDATES: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct RankingTask {
    pub query: Sentence,
    pub candidates: Vec<Sentence>,
    pub reference_index: usize,
}

impl RankingTask {
    pub fn validate(&self) -> Result<()> {
        if self.candidates.len() != RANKING_CANDIDATES || self.reference_index >= self.candidates.len() {
            return Err(Error::InvalidInput(format!(
                "ranking task needs {RANKING_CANDIDATES} candidates with a valid reference index"
            )));
        }
        let reference = &self.candidates[self.reference_index].raw;
        if self.candidates.iter().filter(|c| &c.raw == reference).count() != 1 {
            return Err(Error::InvalidInput("reference must appear exactly once".into()));
        }
        Ok(())
    }
}

/// One task per test pair: the true response plus nine distinct negatives
/// drawn uniformly from the other test responses, shuffled together.
pub fn build_ranking_tasks(test: &PairedDataset, seed: u64) -> Result<Vec<RankingTask>> {
    let distinct: HashSet<&str> = test.items.iter().map(|e| e.response.raw.as_str()).collect();
    if distinct.len() < RANKING_CANDIDATES {
        return Err(Error::InvalidInput(format!(
            "need at least {RANKING_CANDIDATES} distinct test responses, found {}",
            distinct.len()
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut tasks = Vec::with_capacity(test.len());
    for ex in &test.items {
        let mut raws: HashSet<&str> = HashSet::from([ex.response.raw.as_str()]);
        let mut candidates = vec![ex.response.clone()];
        while candidates.len() < RANKING_CANDIDATES {
            let other = &test.items[rng.gen_range(0..test.len())].response;
            if raws.insert(other.raw.as_str()) {
                candidates.push(other.clone());
            }
        }
        candidates.shuffle(&mut rng);
        let reference_index = candidates
            .iter()
            .position(|c| c.raw == ex.response.raw)
            .expect("reference present");
        tasks.push(RankingTask {
            query: ex.post.clone(),
            candidates,
            reference_index,
        });
    }
    Ok(tasks)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankingMetrics {
    pub map: f64,
    pub r10_at_1: f64,
    pub r10_at_2: f64,
    pub r10_at_5: f64,
    pub tasks: usize,
}

/// 1-based rank of the reference under (score desc, index asc).
pub fn reference_rank(scores: &[f64], reference_index: usize) -> usize {
    let r = scores[reference_index];
    1 + scores
        .iter()
        .enumerate()
        .filter(|&(i, &s)| s > r || (s == r && i < reference_index))
        .count()
}

/// With a single relevant candidate, average precision is 1/rank, so MAP is
/// the mean reciprocal rank of the reference.
pub fn map_and_recall(tasks: &[RankingTask], scorer: &dyn PairScorer) -> Result<RankingMetrics> {
    if tasks.is_empty() {
        return Err(Error::InvalidInput("no ranking tasks".into()));
    }
    let mut ranks = Vec::with_capacity(tasks.len());
    for task in tasks {
        task.validate()?;
        let pairs: Vec<(&Sentence, &Sentence)> = task.candidates.iter().map(|c| (&task.query, c)).collect();
        let scores = scorer.score_pairs(&pairs)?;
        ranks.push(reference_rank(&scores, task.reference_index));
    }
    Ok(ranking_metrics_from_ranks(&ranks))
}

pub fn ranking_metrics_from_ranks(ranks: &[usize]) -> RankingMetrics {
    let n = ranks.len() as f64;
    let at = |k: usize| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    RankingMetrics {
        map: ranks.iter().map(|&r| 1.0 / r as f64).sum::<f64>() / n,
        r10_at_1: at(1),
        r10_at_2: at(2),
        r10_at_5: at(5),
        tasks: ranks.len(),
    }
}

impl RankingMetrics {
    pub fn report(&self) -> MetricsReport {
        let mut r = MetricsReport::default();
        let n = self.tasks as f64;
        r.insert("MAP", MetricValue::plain(self.map));
        r.insert("R10@1", MetricValue::counted(self.r10_at_1, self.r10_at_1 * n, n));
        r.insert("R10@2", MetricValue::counted(self.r10_at_2, self.r10_at_2 * n, n));
        r.insert("R10@5", MetricValue::counted(self.r10_at_5, self.r10_at_5 * n, n));
        r
    }
}

/// Distinct-1..4 of the augmented pairs and Novelty-1..4 against the paired
/// data; both sides of every pair count as separate sentences.
pub fn augmented_report(augmented: &PairedDataset, reference: &PairedDataset) -> Result<MetricsReport> {
    let aug = sides(augmented);
    let refs = sides(reference);
    let mut r = MetricsReport::default();
    for n in 1..=4 {
        if let Ok(v) = distinct_n(&aug, n) {
            r.insert(format!("Distinct-{n}"), v);
        }
        if let Ok(v) = novelty_n(&aug, &refs, n) {
            r.insert(format!("Novelty-{n}"), v);
        }
    }
    Ok(r)
}

pub fn corpus_distinct_report(corpus: &PairedDataset) -> MetricsReport {
    let s = sides(corpus);
    let mut r = MetricsReport::default();
    for n in 1..=4 {
        if let Ok(v) = distinct_n(&s, n) {
            r.insert(format!("Distinct-{n}"), v);
        }
    }
    r
}

fn sides(ds: &PairedDataset) -> Vec<&[Token]> {
    ds.items
        .iter()
        .flat_map(|e| [e.post.tokens.as_slice(), e.response.tokens.as_slice()])
        .collect()
}

/// PPL on the references, and BLEU-1/2 plus Dist-1/2 of greedy outputs.
pub fn generation_report(model: &WindowLm, test: &PairedDataset, max_len: usize) -> Result<MetricsReport> {
    let mut r = MetricsReport::default();
    r.insert("PPL", perplexity_value(model, &test.items)?);
    let hyps: Vec<Vec<Token>> = test.items.iter().map(|e| model.generate(&e.post.tokens, max_len)).collect();
    let refs: Vec<&[Token]> = test.items.iter().map(|e| e.response.tokens.as_slice()).collect();
    for n in 1..=2 {
        r.insert(format!("BLEU-{n}"), bleu_n(&hyps, &refs, n)?);
        let d = distinct_n(&hyps, n).unwrap_or(MetricValue::counted(0.0, 0.0, 0.0));
        r.insert(format!("Dist-{n}"), d);
    }
    Ok(r)
}
