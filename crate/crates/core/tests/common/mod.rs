#![allow(dead_code)]

use dialdistill::corpus::{FilterConfig, PairedDataset, UnpairedDataset};
use dialdistill::matcher::{make_training_set, MatchHyper, MatchScorer, DEFAULT_DIM};
use dialdistill::synth::{generate, SynthConfig};

/// Paired data, unpaired pool and test pairs of the bundled corpus.
pub fn synthetic(seed: u64) -> (PairedDataset, UnpairedDataset, PairedDataset) {
    let c = generate(&SynthConfig { seed, ..Default::default() }).unwrap();
    let f = FilterConfig::default();
    (
        PairedDataset::from_pairs(c.paired, &f).0,
        UnpairedDataset::from_texts(c.unpaired, &f).0,
        PairedDataset::from_pairs(c.test, &f).0,
    )
}

/// `pairs` pairs with private tokens per pair and shared filler, and an
/// unpaired pool holding verbatim copies of every post and response.
pub fn copy_corpus(pairs: usize) -> (PairedDataset, UnpairedDataset) {
    let f = FilterConfig::default();
    let raw: Vec<(String, String)> = (0..pairs)
        .map(|i| (format!("p{i}x p{i}y please"), format!("r{i}x r{i}y okay")))
        .collect();
    let texts: Vec<String> = raw.iter().flat_map(|(p, r)| [p.clone(), r.clone()]).collect();
    (PairedDataset::from_pairs(raw, &f).0, UnpairedDataset::from_texts(texts, &f).0)
}

/// A matcher trained until every training pair sits on the right side of
/// 0.9 / 0.1, asserting that it got there.
pub fn separable_matcher(dp: &PairedDataset, seed: u64) -> MatchScorer {
    let set = make_training_set(dp, 5, seed).unwrap();
    let hyper = MatchHyper { epochs: 300, lr: 0.5, l2: 1e-6, seed };
    let (m, _) = MatchScorer::train(&set, hyper, DEFAULT_DIM).unwrap();
    for ex in &set {
        let p = m.score(&ex.post, &ex.response);
        assert!(if ex.label == 1 { p >= 0.9 } else { p <= 0.1 }, "not separated: {p} for {ex:?}");
    }
    m
}
