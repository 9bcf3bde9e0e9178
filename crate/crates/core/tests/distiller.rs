mod common;

use std::collections::HashSet;

use dialdistill::bm25::{brute_force_top_k, Bm25Params};
use dialdistill::corpus::{FilterConfig, PairedDataset, Sentence, UnpairedDataset};
use dialdistill::distiller::{
    candidates_for, distill, read_augmented, write_augmented, Candidate, Direction, DistillConfig,
    DistillIndexes, Selection, ShortfallReason,
};
use dialdistill::matcher::PairScorer;
use dialdistill::Result;

struct Constant(f64);

impl PairScorer for Constant {
    fn score_pairs(&self, pairs: &[(&Sentence, &Sentence)]) -> Result<Vec<f64>> {
        Ok(vec![self.0; pairs.len()])
    }
}

/// Deterministic pseudo-score from the two texts, spread over [0, 1).
struct Hashy;

impl PairScorer for Hashy {
    fn score_pairs(&self, pairs: &[(&Sentence, &Sentence)]) -> Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|(p, r)| {
                let h = dialdistill::matcher::fnv1a64(format!("{}\u{1}{}", p.raw, r.raw).bytes());
                (h % 10_000) as f64 / 10_000.0
            })
            .collect())
    }
}

fn small() -> (PairedDataset, UnpairedDataset) {
    let f = FilterConfig::default();
    let dp = PairedDataset::from_pairs(
        [
            ("i love green tea", "tea is great"),
            ("coffee in the morning", "coffee keeps me awake"),
            ("green parks are nice", "parks are relaxing"),
            ("morning runs are hard", "running is healthy"),
            ("tea or coffee", "i prefer tea"),
        ],
        &f,
    )
    .0;
    let du = UnpairedDataset::from_texts(
        [
            "green tea every day",
            "tea tastes great",
            "coffee is bitter",
            "i stay awake with coffee",
            "the park was relaxing",
            "running keeps me healthy",
            "i prefer tea over coffee",
            "zebra quokka xylophone",
        ],
        &f,
    )
    .0;
    (dp, du)
}

/// Two-hop retrieval re-derived with the brute-force ranker.
fn hand_trace(seed: &Sentence, dp: &PairedDataset, du: &UnpairedDataset, n: usize, m: usize) -> Vec<Candidate> {
    let params = Bm25Params::default();
    let posts: Vec<&[String]> = dp.items.iter().map(|e| e.post.tokens.as_slice()).collect();
    let pool: Vec<&[String]> = du.items.iter().map(|s| s.tokens.as_slice()).collect();
    let mut seen = HashSet::new();
    let mut out = Vec::new();
    for (i, hit) in brute_force_top_k(&posts, params, &seed.tokens, n).into_iter().enumerate() {
        let reply = &dp.items[hit.doc_id].response.tokens;
        // one extra so excluding the seed still leaves m
        let hits: Vec<_> = brute_force_top_k(&pool, params, reply, du.len())
            .into_iter()
            .filter(|h| h.doc_id != seed.id)
            .take(m)
            .collect();
        for (j, s) in hits.into_iter().enumerate() {
            if seen.insert(s.doc_id) {
                out.push(Candidate {
                    sentence_id: s.doc_id,
                    anchor_id: hit.doc_id,
                    i,
                    j,
                });
            }
        }
    }
    out
}

#[test]
fn candidates_match_hand_trace() {
    let (dp, du) = small();
    let idx = DistillIndexes::build(&dp, &du, Bm25Params::default()).unwrap();
    for seed in &du.items {
        let got = candidates_for(seed, &idx, &dp, &du, 2, 2, Direction::Forward);
        assert_eq!(got.candidates, hand_trace(seed, &dp, &du, 2, 2), "seed {:?}", seed.raw);
        assert!(got.candidates.len() <= 4);
        assert!(got.candidates.iter().all(|c| c.sentence_id != seed.id));
    }
    let lonely = &du.items[7];
    assert!(candidates_for(lonely, &idx, &dp, &du, 5, 5, Direction::Forward).candidates.is_empty());
}

#[test]
fn self_retrieval_recovers_original_pairs() {
    let (dp, du) = common::copy_corpus(50);
    let scorer = common::separable_matcher(&dp, 1);
    let idx = DistillIndexes::build(&dp, &du, Bm25Params::default()).unwrap();
    let cfg = DistillConfig { k: 10, eta: 0.9, seed: 3, ..Default::default() };
    let out = distill(&dp, &du, &idx, &scorer, &cfg).unwrap();
    assert_eq!(out.pairs.len(), 10);
    assert!(out.shortfall.is_none());
    for p in &out.pairs {
        assert_eq!(p.post.raw, p.anchor.post.raw);
        assert_eq!(p.response.raw, p.anchor.response.raw);
        assert_eq!(p.anchor_indices, (0, 0));
    }
}

#[test]
fn exhaustion_returns_partial_result() {
    let f = FilterConfig::default();
    let dp = PairedDataset::from_pairs([("red apples", "sweet apples"), ("blue sky", "clear sky")], &f).0;
    let du = UnpairedDataset::from_texts(
        ["red apples again", "sweet apples indeed", "clear sky today", "zz yy", "qq ww", "ee rr"],
        &f,
    )
    .0;
    let idx = DistillIndexes::build(&dp, &du, Bm25Params::default()).unwrap();
    let out = distill(&dp, &du, &idx, &Constant(1.0), &DistillConfig { k: 5, seed: 1, ..Default::default() }).unwrap();
    assert!(out.pairs.len() <= 3);
    let s = out.shortfall.unwrap();
    assert_eq!((s.requested, s.obtained, s.reason), (5, out.pairs.len(), ShortfallReason::SentencesExhausted));
    assert_eq!(out.report.attempted, 6);
    assert_eq!(
        out.report.attempted,
        out.report.accepted + out.report.empty_candidates + out.report.below_threshold
    );
}

#[test]
fn attempt_budget_stops_the_loop() {
    let (dp, du, _) = common::synthetic(1);
    let idx = DistillIndexes::build(&dp, &du, Bm25Params::default()).unwrap();
    let cfg = DistillConfig { k: 100, eta: 1.0, max_attempts: Some(7), seed: 2, ..Default::default() };
    let out = distill(&dp, &du, &idx, &Constant(0.5), &cfg).unwrap();
    assert_eq!(out.report.attempted, 7);
    assert_eq!(out.shortfall.unwrap().reason, ShortfallReason::MaxAttempts);
}

#[test]
fn reruns_and_thread_counts_give_identical_files() {
    let (dp, du, _) = common::synthetic(2);
    let idx = DistillIndexes::build(&dp, &du, Bm25Params::default()).unwrap();
    let cfg = DistillConfig { k: 150, eta: 0.9, seed: 7, ..Default::default() };
    let dir = tempfile::tempdir().unwrap();
    let mut bytes = Vec::new();
    for threads in [1, 3, 1] {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        let out = pool.install(|| distill(&dp, &du, &idx, &Hashy, &cfg)).unwrap();
        let path = dir.path().join(format!("a{}.jsonl", bytes.len()));
        write_augmented(&path, &out.pairs).unwrap();
        bytes.push(std::fs::read(&path).unwrap());
    }
    assert!(!bytes[0].is_empty());
    assert!(bytes.iter().all(|b| b == &bytes[0]));
    let back = read_augmented(&dir.path().join("a0.jsonl")).unwrap();
    assert_eq!(back.len(), 150);
}

#[test]
fn dropping_the_threshold_yields_a_superset() {
    let (dp, du, _) = common::synthetic(3);
    let idx = DistillIndexes::build(&dp, &du, Bm25Params::default()).unwrap();
    let ranked = DistillConfig { k: 60, eta: 0.9, seed: 5, ..Default::default() };
    let a = distill(&dp, &du, &idx, &Hashy, &ranked).unwrap();
    let b = distill(&dp, &du, &idx, &Hashy, &DistillConfig { ranking: false, k: usize::MAX / 64, ..ranked }).unwrap();
    let prefix: HashSet<usize> = a.trace.iter().map(|(s, _)| *s).collect();
    let unranked: HashSet<(String, String)> = b
        .trace
        .iter()
        .filter(|(s, _)| prefix.contains(s))
        .filter_map(|(_, sel)| match sel {
            Selection::Accepted(p) => Some((p.post.raw.clone(), p.response.raw.clone())),
            _ => None,
        })
        .collect();
    for p in &a.pairs {
        assert!(unranked.contains(&(p.post.raw.clone(), p.response.raw.clone())));
    }
    assert!(unranked.len() >= a.pairs.len());
}

#[test]
fn reverse_direction_seeds_the_response_side() {
    let (dp, du, _) = common::synthetic(4);
    let idx = DistillIndexes::build(&dp, &du, Bm25Params::default()).unwrap();
    let cfg = DistillConfig { k: 40, eta: 0.5, seed: 1, direction: Direction::Reverse, ..Default::default() };
    let out = distill(&dp, &du, &idx, &Hashy, &cfg).unwrap();
    assert!(!out.pairs.is_empty());
    for p in &out.pairs {
        assert_eq!(p.response.id, p.seed_id);
        assert_ne!(p.post.raw, p.response.raw);
    }
}
