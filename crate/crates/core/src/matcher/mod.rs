//! Post-response matching scorer: a logistic model over hashed pair features,
//! trained with binary NLL on positives from the paired data and sampled
//! negatives. It ranks candidate pairs during augmentation and doubles as the
//! matching teacher/student during model-level distillation.

mod external;
mod features;

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use external::ExternalScorer;
pub use features::{
    featurize, fnv1a64, FeatureVector, DEFAULT_DIM, DENSE_SLOTS, MAX_CROSS_PAIRS,
    SLOT_BIGRAM_JACCARD, SLOT_LEN_GAP, SLOT_LEN_RATIO, SLOT_UNIGRAM_JACCARD,
};

use crate::corpus::{PairedDataset, Sentence};
use crate::error::{Error, Result};
use crate::model::loss::{match_kd, match_nll};

pub fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Anything that can assign a matching probability to (post, response) pairs.
pub trait PairScorer: Sync {
    fn score_pairs(&self, pairs: &[(&Sentence, &Sentence)]) -> Result<Vec<f64>>;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledPair {
    pub post: Sentence,
    pub response: Sentence,
    pub label: u8,
}

/// Every positive pair followed by `neg_per_pos` negatives whose responses are
/// drawn uniformly from the dataset, redrawn while equal to the true response.
pub fn make_training_set(dp: &PairedDataset, neg_per_pos: usize, seed: u64) -> Result<Vec<LabeledPair>> {
    if dp.len() < 2 {
        return Err(Error::InvalidInput(
            "need at least two pairs to sample negatives".into(),
        ));
    }
    if neg_per_pos == 0 {
        return Err(Error::InvalidInput("neg_per_pos must be at least 1".into()));
    }
    let first = &dp.items[0].response.raw;
    if dp.items.iter().all(|ex| &ex.response.raw == first) {
        return Err(Error::NoValidNegatives);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(dp.len() * (neg_per_pos + 1));
    for ex in &dp.items {
        out.push(LabeledPair {
            post: ex.post.clone(),
            response: ex.response.clone(),
            label: 1,
        });
        for _ in 0..neg_per_pos {
            let neg = loop {
                let j = rng.gen_range(0..dp.len());
                if dp.items[j].response.raw != ex.response.raw {
                    break &dp.items[j].response;
                }
            };
            out.push(LabeledPair {
                post: ex.post.clone(),
                response: neg.clone(),
                label: 0,
            });
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MatchHyper {
    pub epochs: usize,
    pub lr: f64,
    pub l2: f64,
    pub seed: u64,
}

impl Default for MatchHyper {
    fn default() -> Self {
        Self {
            epochs: 5,
            lr: 0.1,
            l2: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchScorer {
    pub weights: Vec<f64>,
    pub bias: f64,
    pub trained_on: String,
    pub hyper: MatchHyper,
}

/// One featurized training example. `teacher_p1` is the frozen teacher's
/// P(l=1) when a distillation term is active.
#[derive(Debug, Clone)]
pub struct FitExample {
    pub features: FeatureVector,
    pub label: u8,
    pub teacher_p1: Option<f64>,
    pub sort_key: (String, String),
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpochLoss {
    pub epoch: usize,
    pub loss: f64,
}

impl MatchScorer {
    pub fn zeros(dim: usize) -> Self {
        Self {
            weights: vec![0.0; dim],
            bias: 0.0,
            trained_on: String::new(),
            hyper: MatchHyper::default(),
        }
    }

    pub fn dim(&self) -> usize {
        self.weights.len()
    }

    pub fn features(&self, post: &Sentence, response: &Sentence) -> FeatureVector {
        featurize(&post.tokens, &response.tokens, self.dim())
    }

    pub fn logit(&self, f: &FeatureVector) -> f64 {
        f.dot(&self.weights) + self.bias
    }

    pub fn score(&self, post: &Sentence, response: &Sentence) -> f64 {
        sigmoid(self.logit(&self.features(post, response)))
    }

    /// Logistic-regression training on `examples` with binary NLL.
    pub fn train(examples: &[LabeledPair], hyper: MatchHyper, dim: usize) -> Result<(Self, Vec<EpochLoss>)> {
        let mut scorer = Self::zeros(dim);
        scorer.hyper = hyper;
        scorer.trained_on = fingerprint_pairs(examples);
        let fit: Vec<FitExample> = examples
            .iter()
            .map(|ex| FitExample {
                features: scorer.features(&ex.post, &ex.response),
                label: ex.label,
                teacher_p1: None,
                sort_key: (ex.post.raw.clone(), ex.response.raw.clone()),
            })
            .collect();
        let log = scorer.fit(fit, 0.0)?;
        Ok((scorer, log))
    }

    /// Per-example loss: NLL plus `alpha` times the soft cross-entropy against
    /// the teacher's distribution (when present).
    pub fn example_loss(&self, ex: &FitExample, alpha: f64) -> f64 {
        let p1 = sigmoid(self.logit(&ex.features));
        let mut loss = match_nll(p1, ex.label);
        if let (Some(t), true) = (ex.teacher_p1, alpha != 0.0) {
            loss += alpha * match_kd([1.0 - t, t], [1.0 - p1, p1]);
        }
        loss
    }

    pub fn mean_loss(&self, examples: &[FitExample], alpha: f64) -> f64 {
        examples.iter().map(|e| self.example_loss(e, alpha)).sum::<f64>() / examples.len() as f64
    }

    /// Gradient of [`Self::example_loss`] with respect to the logit.
    pub fn logit_grad(&self, ex: &FitExample, alpha: f64) -> f64 {
        let p1 = sigmoid(self.logit(&ex.features));
        let mut g = p1 - ex.label as f64;
        if let (Some(t), true) = (ex.teacher_p1, alpha != 0.0) {
            g += alpha * (p1 - t);
        }
        g
    }

    /// Plain SGD over a seeded shuffle. Examples are first put in a canonical
    /// order, so the result does not depend on the order they were supplied in.
    /// L2 decay is applied to the weights touched by each example.
    pub fn fit(&mut self, mut examples: Vec<FitExample>, alpha: f64) -> Result<Vec<EpochLoss>> {
        if examples.is_empty() {
            return Err(Error::InvalidInput("no training examples".into()));
        }
        if !(examples.iter().any(|e| e.label == 1) && examples.iter().any(|e| e.label == 0)) {
            return Err(Error::InvalidInput("training set needs both labels".into()));
        }
        examples.sort_by(|a, b| (&a.sort_key, a.label).cmp(&(&b.sort_key, b.label)));
        let hyper = self.hyper;
        let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let initial = self.mean_loss(&examples, alpha);
        check_finite(initial, || "epoch 0 (initial loss)".to_string())?;
        let mut log = vec![EpochLoss { epoch: 0, loss: initial }];
        for epoch in 1..=hyper.epochs {
            order.shuffle(&mut rng);
            for (step, &i) in order.iter().enumerate() {
                let ex = &examples[i];
                let g = self.logit_grad(ex, alpha);
                check_finite(g, || format!("epoch {epoch} step {step}"))?;
                for &(j, v) in &ex.features.entries {
                    let w = &mut self.weights[j as usize];
                    *w -= hyper.lr * (g * v + hyper.l2 * *w);
                }
                self.bias -= hyper.lr * g;
            }
            let loss = self.mean_loss(&examples, alpha);
            check_finite(loss, || format!("epoch {epoch} (end of epoch)"))?;
            log::debug!("matcher epoch {epoch}: loss {loss:.6}");
            log.push(EpochLoss { epoch, loss });
        }
        Ok(log)
    }

    pub fn to_checkpoint(&self, role: &str) -> MatchCheckpoint {
        MatchCheckpoint {
            version: CHECKPOINT_VERSION,
            kind: "match_scorer".into(),
            role: role.into(),
            dim: self.dim(),
            bias: self.bias,
            weights: self
                .weights
                .iter()
                .enumerate()
                .filter(|(_, w)| **w != 0.0)
                .map(|(i, &w)| (i as u32, w))
                .collect(),
            trained_on: self.trained_on.clone(),
            hyper: self.hyper,
        }
    }

    pub fn from_checkpoint(ck: MatchCheckpoint) -> Result<(Self, String)> {
        if ck.version != CHECKPOINT_VERSION || ck.kind != "match_scorer" {
            return Err(Error::InvalidInput(format!(
                "not a version {CHECKPOINT_VERSION} match_scorer checkpoint"
            )));
        }
        let mut weights = vec![0.0; ck.dim];
        for (i, w) in ck.weights {
            *weights
                .get_mut(i as usize)
                .ok_or_else(|| Error::InvalidInput(format!("weight index {i} out of range")))? = w;
        }
        Ok((
            Self {
                weights,
                bias: ck.bias,
                trained_on: ck.trained_on,
                hyper: ck.hyper,
            },
            ck.role,
        ))
    }

    pub fn save(&self, path: &Path, role: &str) -> Result<()> {
        let json = serde_json::to_string(&self.to_checkpoint(role))?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

impl PairScorer for MatchScorer {
    fn score_pairs(&self, pairs: &[(&Sentence, &Sentence)]) -> Result<Vec<f64>> {
        Ok(pairs.iter().map(|(p, r)| self.score(p, r)).collect())
    }
}

pub const CHECKPOINT_VERSION: u32 = 1;

/// On-disk form of a [`MatchScorer`]; only non-zero weights are stored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatchCheckpoint {
    pub version: u32,
    pub kind: String,
    pub role: String,
    pub dim: usize,
    pub bias: f64,
    pub weights: Vec<(u32, f64)>,
    pub trained_on: String,
    pub hyper: MatchHyper,
}

fn check_finite(v: f64, step: impl FnOnce() -> String) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite { step: step() })
    }
}

pub fn fingerprint_pairs(examples: &[LabeledPair]) -> String {
    let h = fnv1a64(examples.iter().flat_map(|e| {
        e.post
            .raw
            .bytes()
            .chain([0x1f])
            .chain(e.response.raw.bytes())
            .chain([0x1e, e.label])
    }));
    format!("{h:016x}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::FilterConfig;

    fn dataset(n: usize) -> PairedDataset {
        let pairs: Vec<(String, String)> = (0..n)
            .map(|i| (format!("post number {i}"), format!("reply number {i}")))
            .collect();
        PairedDataset::from_pairs(pairs, &FilterConfig::default()).0
    }

    fn s(id: usize, raw: &str) -> Sentence {
        Sentence::new(id, raw).unwrap()
    }

    /// Positives contain "yes" in the response, negatives "no".
    pub(crate) fn separable_set() -> Vec<LabeledPair> {
        let mut out = Vec::new();
        for i in 0..20 {
            let post = s(i, &format!("question {i} here"));
            out.push(LabeledPair {
                post: post.clone(),
                response: s(i, &format!("yes answer {}", i % 7)),
                label: 1,
            });
            out.push(LabeledPair {
                post,
                response: s(i, &format!("no answer {}", (i + 3) % 7)),
                label: 0,
            });
        }
        out
    }

    #[test]
    fn training_set_counts_and_negatives() {
        let dp = dataset(100);
        let set = make_training_set(&dp, 1, 3).unwrap();
        assert_eq!(set.len(), 200);
        assert_eq!(set.iter().filter(|p| p.label == 1).count(), 100);
        assert_eq!(set, make_training_set(&dp, 1, 3).unwrap());
        for seed in 0..20 {
            for chunk in make_training_set(&dp, 3, seed).unwrap().chunks(4) {
                assert!(chunk[1..].iter().all(|n| n.response.raw != chunk[0].response.raw));
            }
        }
    }

    #[test]
    fn training_set_errors() {
        let (same, _) = PairedDataset::from_pairs(
            [("post a", "same reply"), ("post b", "same reply")],
            &FilterConfig::default(),
        );
        assert!(matches!(make_training_set(&same, 1, 0), Err(Error::NoValidNegatives)));
        assert!(make_training_set(&dataset(1), 1, 0).is_err());
    }

    #[test]
    fn zero_epochs_is_identity() {
        let hyper = MatchHyper { epochs: 0, ..Default::default() };
        let (scorer, log) = MatchScorer::train(&separable_set(), hyper, 1 << 12).unwrap();
        assert!(scorer.weights.iter().all(|w| *w == 0.0));
        assert_eq!(scorer.score(&s(0, "any post"), &s(1, "any reply")), 0.5);
        assert_eq!(log.len(), 1);
        assert!((log[0].loss - 2f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn separable_set_is_learned() {
        let set = separable_set();
        let (scorer, log) = MatchScorer::train(&set, MatchHyper::default(), DEFAULT_DIM).unwrap();
        let correct = set
            .iter()
            .filter(|ex| (scorer.score(&ex.post, &ex.response) > 0.5) == (ex.label == 1))
            .count();
        assert_eq!(correct, set.len());
        for w in log.windows(2) {
            assert!(w[1].loss <= w[0].loss + 1e-9, "{log:?}");
        }
        let hyper = MatchHyper { epochs: 30, ..Default::default() };
        let (scorer, _) = MatchScorer::train(&set, hyper, DEFAULT_DIM).unwrap();
        assert!(scorer.score(&s(0, "question 99 here"), &s(1, "yes answer 2")) > 0.9);
        assert!(scorer.score(&s(0, "question 99 here"), &s(1, "no answer 2")) < 0.1);
    }

    #[test]
    fn input_order_does_not_matter() {
        let set = separable_set();
        let mut rev = set.clone();
        rev.reverse();
        let a = MatchScorer::train(&set, MatchHyper::default(), 1 << 12).unwrap().0;
        let b = MatchScorer::train(&rev, MatchHyper::default(), 1 << 12).unwrap().0;
        assert_eq!(a.weights, b.weights);
        assert_eq!(a.bias.to_bits(), b.bias.to_bits());
    }

    #[test]
    fn single_label_is_rejected() {
        let set: Vec<_> = separable_set().into_iter().filter(|p| p.label == 1).collect();
        assert!(MatchScorer::train(&set, MatchHyper::default(), 1 << 12).is_err());
    }

    #[test]
    fn divergence_is_reported() {
        let hyper = MatchHyper { lr: f64::INFINITY, ..Default::default() };
        let err = MatchScorer::train(&separable_set(), hyper, 1 << 12).unwrap_err();
        assert!(matches!(err, Error::NonFinite { .. }), "{err}");
    }

    #[test]
    fn checkpoint_round_trip_is_exact() {
        let (scorer, _) = MatchScorer::train(&separable_set(), MatchHyper::default(), 1 << 12).unwrap();
        let json = serde_json::to_string(&scorer.to_checkpoint("teacher")).unwrap();
        let (back, role) = MatchScorer::from_checkpoint(serde_json::from_str(&json).unwrap()).unwrap();
        assert_eq!(role, "teacher");
        assert_eq!(back, scorer);
        assert_eq!(serde_json::to_string(&back.to_checkpoint("teacher")).unwrap(), json);
    }
}
