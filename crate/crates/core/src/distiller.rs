//! Data-level distillation: turn unpaired sentences into augmented
//! post-response pairs.
//!
//! For each sampled sentence S the paired posts closest to S are retrieved,
//! their responses are used to retrieve unpaired sentences, and every such
//! sentence forms a candidate pair ⟨S, S_ij⟩ anchored by ⟨X_i, Y_i⟩. Only the
//! best-scoring candidate of each S is kept, and only when its score clears
//! the threshold.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bm25::{Bm25Index, Bm25Params};
use crate::corpus::{PairedDataset, PairedExample, Sentence, UnpairedDataset};
use crate::error::{Error, Result};
use crate::matcher::PairScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    /// S is the post; candidates are responses reached through paired responses.
    #[default]
    Forward,
    /// S is the response; candidates are posts reached through paired posts.
    Reverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DistillConfig {
    pub k: usize,
    pub eta: f64,
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    /// Defaults to 50·k when unset.
    pub max_attempts: Option<usize>,
    pub direction: Direction,
    /// When false the threshold is not applied: every non-empty candidate set
    /// contributes its top-1 pair.
    pub ranking: bool,
}

impl Default for DistillConfig {
    fn default() -> Self {
        Self {
            k: 1000,
            eta: 0.9,
            n: 5,
            m: 5,
            seed: 0,
            max_attempts: None,
            direction: Direction::Forward,
            ranking: true,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 || self.n == 0 || self.m == 0 {
            return Err(Error::InvalidConfig("k, n and m must be at least 1".into()));
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidConfig(format!("eta {} outside [0, 1]", self.eta)));
        }
        if self.eta < 0.9 {
            log::warn!("eta {} is below the recommended minimum of 0.9", self.eta);
        }
        if self.max_attempts == Some(0) {
            return Err(Error::InvalidConfig("max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn attempt_budget(&self) -> usize {
        self.max_attempts.unwrap_or(self.k.saturating_mul(50))
    }
}

/// Retrieval structures over both datasets.
#[derive(Debug, Clone)]
pub struct DistillIndexes {
    pub dp_posts: Bm25Index,
    pub dp_responses: Bm25Index,
    pub du: Bm25Index,
}

impl DistillIndexes {
    pub fn build(dp: &PairedDataset, du: &UnpairedDataset, params: Bm25Params) -> Result<Self> {
        let posts: Vec<&[String]> = dp.items.iter().map(|e| e.post.tokens.as_slice()).collect();
        let responses: Vec<&[String]> = dp.items.iter().map(|e| e.response.tokens.as_slice()).collect();
        let unpaired: Vec<&[String]> = du.items.iter().map(|s| s.tokens.as_slice()).collect();
        Ok(Self {
            dp_posts: Bm25Index::build(&posts, params)?,
            dp_responses: Bm25Index::build(&responses, params)?,
            du: Bm25Index::build(&unpaired, params)?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Candidate {
    /// Unpaired sentence paired with the seed.
    pub sentence_id: usize,
    pub anchor_id: usize,
    /// Zero-based retrieval ranks (i over paired hits, j over unpaired hits).
    pub i: usize,
    pub j: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    pub seed_id: usize,
    pub candidates: Vec<Candidate>,
}

/// Two-hop retrieval for one seed sentence. Candidates are unique per
/// sentence, keeping the first (i, j) in lexicographic order, and never equal
/// the seed itself.
pub fn candidates_for(
    seed: &Sentence,
    indexes: &DistillIndexes,
    dp: &PairedDataset,
    du: &UnpairedDataset,
    n: usize,
    m: usize,
    direction: Direction,
) -> CandidateSet {
    let (first_hop, second_side): (&Bm25Index, fn(&PairedExample) -> &Sentence) = match direction {
        Direction::Forward => (&indexes.dp_posts, |ex| &ex.response),
        Direction::Reverse => (&indexes.dp_responses, |ex| &ex.post),
    };
    let exclude = HashSet::from([seed.id]);
    let mut seen = HashSet::new();
    let mut candidates = Vec::new();
    for (i, hit) in first_hop.top_k(&seed.tokens, n, &HashSet::new()).into_iter().enumerate() {
        let anchor = &dp.items[hit.doc_id];
        let hop = second_side(anchor);
        for (j, s) in indexes.du.top_k(&hop.tokens, m, &exclude).into_iter().enumerate() {
            if du.items[s.doc_id].raw == seed.raw || !seen.insert(s.doc_id) {
                continue;
            }
            candidates.push(Candidate {
                sentence_id: s.doc_id,
                anchor_id: hit.doc_id,
                i,
                j,
            });
        }
    }
    CandidateSet {
        seed_id: seed.id,
        candidates,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedPair {
    pub post: Sentence,
    pub response: Sentence,
    pub score: f64,
    pub anchor: PairedExample,
    pub anchor_indices: (usize, usize),
    pub seed_id: usize,
}

/// Outcome of ranking one candidate set.
#[derive(Debug, Clone, PartialEq)]
pub enum Selection {
    Empty,
    BelowThreshold { best: AugmentedPair },
    Accepted(AugmentedPair),
}

/// Scores every candidate and keeps the best by (score desc, i asc, j asc);
/// accepted iff score ≥ `eta` (or unconditionally when `ranking` is off).
pub fn select_top1(
    cands: &CandidateSet,
    dp: &PairedDataset,
    du: &UnpairedDataset,
    scorer: &dyn PairScorer,
    eta: f64,
    direction: Direction,
    ranking: bool,
) -> Result<Selection> {
    if cands.candidates.is_empty() {
        return Ok(Selection::Empty);
    }
    let seed = &du.items[cands.seed_id];
    let orient = |c: &Candidate| -> (&Sentence, &Sentence) {
        let other = &du.items[c.sentence_id];
        match direction {
            Direction::Forward => (seed, other),
            Direction::Reverse => (other, seed),
        }
    };
    let pairs: Vec<(&Sentence, &Sentence)> = cands.candidates.iter().map(orient).collect();
    let scores = scorer.score_pairs(&pairs)?;
    let best = (0..scores.len())
        .min_by(|&a, &b| {
            scores[b]
                .total_cmp(&scores[a])
                .then((cands.candidates[a].i, cands.candidates[a].j).cmp(&(cands.candidates[b].i, cands.candidates[b].j)))
        })
        .expect("non-empty");
    let c = &cands.candidates[best];
    let (post, response) = pairs[best];
    let pair = AugmentedPair {
        post: post.clone(),
        response: response.clone(),
        score: scores[best],
        anchor: dp.items[c.anchor_id].clone(),
        anchor_indices: (c.i, c.j),
        seed_id: cands.seed_id,
    };
    Ok(if !ranking || pair.score >= eta {
        Selection::Accepted(pair)
    } else {
        Selection::BelowThreshold { best: pair }
    })
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunReport {
    pub attempted: usize,
    pub accepted: usize,
    pub empty_candidates: usize,
    pub below_threshold: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShortfallReason {
    SentencesExhausted,
    MaxAttempts,
}

/// Returned alongside a partial result when fewer than k pairs were found.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Shortfall {
    pub requested: usize,
    pub obtained: usize,
    pub reason: ShortfallReason,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DistillOutcome {
    pub pairs: Vec<AugmentedPair>,
    pub report: RunReport,
    pub shortfall: Option<Shortfall>,
    /// Every consumed seed in sampling order with its selection.
    pub trace: Vec<(usize, Selection)>,
}

/// Runs the full augmentation loop. Seeds are drawn from a seeded permutation
/// of the unpaired data, so each sentence is tried at most once; the per-seed
/// work runs in parallel batches but results are committed in order.
pub fn distill(
    dp: &PairedDataset,
    du: &UnpairedDataset,
    indexes: &DistillIndexes,
    scorer: &dyn PairScorer,
    config: &DistillConfig,
) -> Result<DistillOutcome> {
    config.validate()?;
    let mut order: Vec<usize> = (0..du.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let budget = config.attempt_budget();
    let batch = (rayon::current_num_threads() * 8).max(16);

    let mut out = DistillOutcome {
        pairs: Vec::new(),
        report: RunReport::default(),
        shortfall: None,
        trace: Vec::new(),
    };
    let mut cursor = 0;
    'outer: while out.pairs.len() < config.k && cursor < order.len() && out.report.attempted < budget {
        let end = (cursor + batch).min(order.len());
        let results: Vec<Result<Selection>> = order[cursor..end]
            .par_iter()
            .map(|&sid| {
                let seed = &du.items[sid];
                let cands = candidates_for(seed, indexes, dp, du, config.n, config.m, config.direction);
                select_top1(&cands, dp, du, scorer, config.eta, config.direction, config.ranking)
            })
            .collect();
        for (&sid, sel) in order[cursor..end].iter().zip(results) {
            let sel = sel?;
            out.report.attempted += 1;
            match &sel {
                Selection::Empty => out.report.empty_candidates += 1,
                Selection::BelowThreshold { .. } => out.report.below_threshold += 1,
                Selection::Accepted(pair) => out.pairs.push(pair.clone()),
            }
            out.trace.push((sid, sel));
            if out.pairs.len() >= config.k || out.report.attempted >= budget {
                break 'outer;
            }
        }
        cursor = end;
    }
    out.report.accepted = out.pairs.len();
    if out.pairs.len() < config.k {
        let reason = if out.report.attempted >= budget {
            ShortfallReason::MaxAttempts
        } else {
            ShortfallReason::SentencesExhausted
        };
        log::warn!(
            "augmentation shortfall: {} of {} pairs ({reason:?})",
            out.pairs.len(),
            config.k
        );
        out.shortfall = Some(Shortfall {
            requested: config.k,
            obtained: out.pairs.len(),
            reason,
        });
    }
    Ok(out)
}

/// One line of the augmented-pairs JSONL file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentedRecord {
    pub post: String,
    pub response: String,
    pub score: f64,
    pub anchor_post: String,
    pub anchor_response: String,
    pub seed_id: usize,
}

impl From<&AugmentedPair> for AugmentedRecord {
    fn from(p: &AugmentedPair) -> Self {
        Self {
            post: p.post.raw.clone(),
            response: p.response.raw.clone(),
            score: p.score,
            anchor_post: p.anchor.post.raw.clone(),
            anchor_response: p.anchor.response.raw.clone(),
            seed_id: p.seed_id,
        }
    }
}

pub fn write_augmented(path: &Path, pairs: &[AugmentedPair]) -> Result<()> {
    let mut buf = Vec::new();
    for p in pairs {
        serde_json::to_writer(&mut buf, &AugmentedRecord::from(p))?;
        buf.push(b'\n');
    }
    let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(&buf).map_err(|e| Error::io(path, e))
}

/// Reads augmented pairs back as a paired dataset (posts and responses only).
pub fn read_augmented(path: &Path) -> Result<PairedDataset> {
    let records: Vec<AugmentedRecord> = crate::corpus::read_jsonl(path)?;
    let examples = records
        .into_iter()
        .map(|r| {
            Ok(PairedExample {
                id: 0,
                post: Sentence::new(0, &r.post)?,
                response: Sentence::new(0, &r.response)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut ds = PairedDataset::from_examples(examples);
    ds.source_path = path.display().to_string();
    Ok(ds)
}

/// Augmented pairs as a paired dataset for training.
pub fn as_paired(pairs: &[AugmentedPair]) -> PairedDataset {
    PairedDataset::from_examples(pairs.iter().map(|p| PairedExample {
        id: 0,
        post: p.post.clone(),
        response: p.response.clone(),
    }))
}
