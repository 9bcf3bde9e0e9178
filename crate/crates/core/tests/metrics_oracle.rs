mod common;

use dialdistill::corpus::{split_tokens, PairedDataset, Sentence, Token};
use dialdistill::matcher::{fnv1a64, PairScorer};
use dialdistill::metrics::{
    bleu_n, build_ranking_tasks, distinct_n, map_and_recall, novelty_n, perplexity, ranking_metrics_from_ranks,
    RankingTask,
};
use dialdistill::model::{LmShape, Role, Vocab, WindowLm};
use dialdistill::Result;
use proptest::prelude::*;

struct Salted(u64);

impl PairScorer for Salted {
    fn score_pairs(&self, pairs: &[(&Sentence, &Sentence)]) -> Result<Vec<f64>> {
        Ok(pairs
            .iter()
            .map(|(p, r)| {
                let h = fnv1a64(format!("{}|{}|{}", self.0, p.raw, r.raw).bytes());
                // coarse buckets so ties actually happen
                (h % 7) as f64 / 7.0
            })
            .collect())
    }
}

fn toks(lines: &[&str]) -> Vec<Vec<Token>> {
    lines.iter().map(|l| split_tokens(l)).collect()
}

/// Full re-ranking with a stable sort, then textbook average precision and
/// recall over the single relevant candidate.
fn brute_force(tasks: &[RankingTask], scorer: &dyn PairScorer) -> (f64, [f64; 3]) {
    let (mut ap_sum, mut hits) = (0.0, [0.0; 3]);
    for t in tasks {
        let pairs: Vec<_> = t.candidates.iter().map(|c| (&t.query, c)).collect();
        let scores = scorer.score_pairs(&pairs).unwrap();
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap());
        let relevant: Vec<bool> = order.iter().map(|&i| i == t.reference_index).collect();
        let mut seen = 0.0;
        let mut ap = 0.0;
        for (k, &rel) in relevant.iter().enumerate() {
            if rel {
                seen += 1.0;
                ap += seen / (k + 1) as f64;
            }
        }
        ap_sum += ap / seen;
        for (slot, k) in [1, 2, 5].into_iter().enumerate() {
            hits[slot] += relevant[..k].iter().filter(|r| **r).count() as f64;
        }
    }
    let n = tasks.len() as f64;
    (ap_sum / n, hits.map(|h| h / n))
}

#[test]
fn ranking_matches_brute_force_reranking() {
    let (_, _, test) = common::synthetic(9);
    for seed in 0..10 {
        let tasks = build_ranking_tasks(&test, seed).unwrap();
        let scorer = Salted(seed);
        let got = map_and_recall(&tasks, &scorer).unwrap();
        let (map, r) = brute_force(&tasks, &scorer);
        assert!((got.map - map).abs() < 1e-12);
        assert_eq!([got.r10_at_1, got.r10_at_2, got.r10_at_5], r);
    }
}

#[test]
fn ranking_tasks_are_well_formed_and_seeded() {
    let (_, _, test) = common::synthetic(9);
    let a = build_ranking_tasks(&test, 4).unwrap();
    assert_eq!(a, build_ranking_tasks(&test, 4).unwrap());
    assert_eq!(a.len(), test.len());
    for (t, ex) in a.iter().zip(&test.items) {
        t.validate().unwrap();
        assert_eq!(t.candidates[t.reference_index].raw, ex.response.raw);
    }
    let tiny = PairedDataset::from_pairs([("a b", "c d"), ("e f", "g h")], &Default::default()).0;
    assert!(build_ranking_tasks(&tiny, 0).is_err());
}

#[test]
fn recall_is_monotone_over_a_thousand_tasks() {
    let (_, _, test) = common::synthetic(10);
    let mut ranks = Vec::new();
    for seed in 0..5 {
        let tasks = build_ranking_tasks(&test, seed).unwrap();
        let m = map_and_recall(&tasks, &Salted(100 + seed)).unwrap();
        assert!(m.r10_at_1 <= m.r10_at_2 && m.r10_at_2 <= m.r10_at_5 && m.r10_at_5 <= 1.0);
        assert!((0.1..=1.0).contains(&m.map));
        for t in &tasks {
            let pairs: Vec<_> = t.candidates.iter().map(|c| (&t.query, c)).collect();
            let s = Salted(100 + seed).score_pairs(&pairs).unwrap();
            ranks.push(dialdistill::metrics::reference_rank(&s, t.reference_index));
        }
    }
    assert_eq!(ranks.len(), 1000);
    let m = ranking_metrics_from_ranks(&ranks);
    assert!(m.r10_at_1 <= m.r10_at_2 && m.r10_at_2 <= m.r10_at_5 && m.r10_at_5 <= 1.0);
    // every miss at rank 1 contributes at most 1/2
    assert!(m.map >= m.r10_at_1 && m.map <= m.r10_at_1 + (1.0 - m.r10_at_1) / 2.0);
}

#[test]
fn uniform_model_has_vocabulary_sized_perplexity() {
    // 4 specials + 6 words
    let words: Vec<Token> = ["a", "b", "c", "d", "e", "f"].iter().map(|s| s.to_string()).collect();
    let vocab = Vocab::build([words.as_slice()]);
    assert_eq!(vocab.len(), 10);
    let lm = WindowLm::zeros(vocab, LmShape { dim: 4, hidden: 4, window: 3 }, Role::Teacher);
    let test = PairedDataset::from_pairs([("a b", "c d e"), ("f", "a"), ("zz top", "b b b b")], &Default::default()).0;
    assert!((perplexity(&lm, &test.items).unwrap() - 10.0).abs() < 1e-9);
}

#[test]
fn perplexity_is_exp_of_mean_token_nll() {
    let (dp, _, test) = common::synthetic(11);
    let vocab = dialdistill::model::build_vocab(&dp, &PairedDataset::default());
    let lm = WindowLm::new(vocab, LmShape { dim: 8, hidden: 8, window: 3 }, Role::Teacher, 5);
    let (mut nll, mut count) = (0.0, 0usize);
    for ex in &test.items {
        let enc = lm.encode(&ex.post.tokens, &ex.response.tokens);
        for (ctx, target) in enc.positions(3) {
            nll -= lm.forward(ctx).probs[target as usize].ln();
            count += 1;
        }
    }
    let expected = (nll / count as f64).exp();
    let got = perplexity(&lm, &test.items).unwrap();
    assert!(((got - expected) / expected).abs() < 1e-12);
}

#[test]
fn hand_counted_values() {
    assert_eq!(distinct_n(&toks(&["a b", "a c"]), 1).unwrap().value, 0.75);
    let nov = novelty_n(&toks(&["a b d"]), &toks(&["a b c"]), 1).unwrap().value;
    assert!((nov - 1.0 / 3.0).abs() < 1e-12);
    let b = bleu_n(&toks(&["a b c"]), &toks(&["a b d"]), 1).unwrap().value;
    assert!((b - 2.0 / 3.0).abs() < 1e-9);
    let m = ranking_metrics_from_ranks(&[2]);
    assert_eq!((m.map, m.r10_at_1, m.r10_at_2, m.r10_at_5), (0.5, 0.0, 1.0, 1.0));
}

proptest! {
    #[test]
    fn bleu_of_a_corpus_against_itself_is_one(lines in prop::collection::vec("[a-e]( [a-e]){1,6}", 1..8), n in 1usize..3) {
        let t = toks(&lines.iter().map(String::as_str).collect::<Vec<_>>());
        prop_assert_eq!(bleu_n(&t, &t, n).unwrap().value, 1.0);
    }

    #[test]
    fn distinct_and_novelty_are_ratios(lines in prop::collection::vec("[a-f]( [a-f]){0,5}", 1..8), n in 1usize..3) {
        let t = toks(&lines.iter().map(String::as_str).collect::<Vec<_>>());
        if let Ok(d) = distinct_n(&t, n) {
            prop_assert!(d.value > 0.0 && d.value <= 1.0);
            prop_assert_eq!(novelty_n(&t, &t, n).unwrap().value, 0.0);
        }
    }
}
