use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::lm::{EncodedPair, LmShape, Role, Vocab, WindowLm};
use crate::corpus::{PairedDataset, PairedExample};
use crate::error::{Error, Result};
use crate::matcher::{make_training_set, EpochLoss, FitExample, MatchHyper, MatchScorer};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub alpha_m: f64,
    pub alpha_g: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            alpha_m: 1.0,
            alpha_g: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StudentMode {
    /// NLL + KD on paired ∪ augmented.
    Full,
    /// NLL only on paired ∪ augmented.
    WoMl,
    /// NLL + KD on paired only.
    WoDl,
    /// NLL + KD on augmented only.
    WoPd,
}

impl StudentMode {
    pub const ALL: [StudentMode; 4] = [Self::Full, Self::WoMl, Self::WoDl, Self::WoPd];

    pub fn name(&self) -> &'static str {
        match self {
            Self::Full => "full",
            Self::WoMl => "wo_ml",
            Self::WoDl => "wo_dl",
            Self::WoPd => "wo_pd",
        }
    }

    pub fn parse(s: &str) -> Option<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('_', "/") == s)
    }

    fn uses_kd(&self) -> bool {
        !matches!(self, Self::WoMl)
    }

    /// Training examples for this mode, paired first.
    pub fn select<'a>(&self, dp: &'a PairedDataset, da: &'a PairedDataset) -> Result<Vec<&'a PairedExample>> {
        if !matches!(self, Self::WoDl) && da.is_empty() {
            return Err(Error::EmptyAugmented(self.name()));
        }
        let out: Vec<&PairedExample> = match self {
            Self::Full | Self::WoMl => dp.items.iter().chain(&da.items).collect(),
            Self::WoDl => dp.items.iter().collect(),
            Self::WoPd => da.items.iter().collect(),
        };
        if out.is_empty() {
            return Err(Error::InvalidInput("no training pairs".into()));
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MatchModel {
    pub scorer: MatchScorer,
    pub role: Role,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub split: String,
    pub loss: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ppl: Option<f64>,
}

fn match_log(split: &str, log: Vec<EpochLoss>) -> Vec<EpochLog> {
    log.into_iter()
        .map(|e| EpochLog {
            epoch: e.epoch,
            split: split.to_string(),
            loss: e.loss,
            ppl: None,
        })
        .collect()
}

fn fit_examples(pairs: &[crate::matcher::LabeledPair], dim: usize, teacher: Option<&MatchScorer>) -> Vec<FitExample> {
    pairs
        .par_iter()
        .map(|ex| {
            let features = crate::matcher::featurize(&ex.post.tokens, &ex.response.tokens, dim);
            let teacher_p1 = teacher.map(|t| crate::matcher::sigmoid(t.logit(&features)));
            FitExample {
                features,
                label: ex.label,
                teacher_p1,
                sort_key: (ex.post.raw.clone(), ex.response.raw.clone()),
            }
        })
        .collect()
}

/// Matching teacher: NLL on the paired data with sampled negatives.
pub fn train_match_teacher(
    dp: &PairedDataset,
    neg_per_pos: usize,
    hyper: MatchHyper,
    dim: usize,
) -> Result<(MatchModel, Vec<EpochLog>)> {
    let set = make_training_set(dp, neg_per_pos, hyper.seed)?;
    let (scorer, log) = MatchScorer::train(&set, hyper, dim)?;
    Ok((
        MatchModel {
            scorer,
            role: Role::Teacher,
        },
        match_log("match_teacher", log),
    ))
}

pub fn train_match_student(
    dp: &PairedDataset,
    da: &PairedDataset,
    teacher: &MatchModel,
    alpha_m: f64,
    neg_per_pos: usize,
    hyper: MatchHyper,
    mode: StudentMode,
) -> Result<(MatchModel, Vec<EpochLog>)> {
    let data = PairedDataset::from_examples(mode.select(dp, da)?.into_iter().cloned());
    let set = make_training_set(&data, neg_per_pos, hyper.seed)?;
    let dim = teacher.scorer.dim();
    let alpha = if mode.uses_kd() { alpha_m } else { 0.0 };
    let examples = fit_examples(&set, dim, (alpha != 0.0).then_some(&teacher.scorer));
    let mut scorer = MatchScorer::zeros(dim);
    scorer.hyper = hyper;
    scorer.trained_on = crate::matcher::fingerprint_pairs(&set);
    let log = scorer.fit(examples, alpha)?;
    Ok((
        MatchModel {
            scorer,
            role: Role::Student,
        },
        match_log(&format!("match_student_{}", mode.name()), log),
    ))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LmHyper {
    pub epochs: usize,
    pub lr: f64,
    pub seed: u64,
    pub shape: LmShape,
}

impl Default for LmHyper {
    fn default() -> Self {
        Self {
            epochs: 10,
            lr: 0.05,
            seed: 0,
            shape: LmShape::default(),
        }
    }
}

/// Vocabulary over every post and response of both datasets.
pub fn build_vocab(dp: &PairedDataset, da: &PairedDataset) -> Vocab {
    Vocab::build(
        dp.items
            .iter()
            .chain(&da.items)
            .flat_map(|ex| [ex.post.tokens.as_slice(), ex.response.tokens.as_slice()]),
    )
}

const SHUFFLE_STREAM: u64 = 0x9e37_79b9_7f4a_7c15;

/// SGD over whole pairs: one update per pair, summed over its positions.
fn fit_lm(
    model: &mut WindowLm,
    data: &[EncodedPair],
    soft: Option<&[Vec<Vec<f64>>]>,
    alpha: f64,
    hyper: &LmHyper,
    split: &str,
) -> Result<Vec<EpochLog>> {
    let tokens: usize = data.iter().map(EncodedPair::targets).sum();
    let mean_loss = |m: &WindowLm| -> (f64, f64) {
        let (mut loss, mut nll) = (0.0, 0.0);
        for (i, pair) in data.iter().enumerate() {
            let p = m.pair_loss(pair, soft.map(|s| s[i].as_slice()), alpha, None);
            loss += p.nll + alpha * p.kd;
            nll += p.nll;
        }
        (loss / data.len() as f64, (nll / tokens as f64).exp())
    };
    let (initial, ppl) = mean_loss(model);
    if !initial.is_finite() {
        return Err(Error::NonFinite {
            step: format!("{split} epoch 0 (initial loss)"),
        });
    }
    let mut log = vec![EpochLog {
        epoch: 0,
        split: split.to_string(),
        loss: initial,
        ppl: Some(ppl),
    }];
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed ^ SHUFFLE_STREAM);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut grad = vec![0.0; model.params.len()];
    for epoch in 1..=hyper.epochs {
        order.shuffle(&mut rng);
        let (mut loss, mut nll) = (0.0, 0.0);
        for (step, &i) in order.iter().enumerate() {
            grad.iter_mut().for_each(|g| *g = 0.0);
            let p = model.pair_loss(&data[i], soft.map(|s| s[i].as_slice()), alpha, Some(&mut grad));
            let l = p.nll + alpha * p.kd;
            if !l.is_finite() {
                return Err(Error::NonFinite {
                    step: format!("{split} epoch {epoch} step {step}"),
                });
            }
            loss += l;
            nll += p.nll;
            for (w, g) in model.params.iter_mut().zip(&grad) {
                *w -= hyper.lr * g;
            }
        }
        let entry = EpochLog {
            epoch,
            split: split.to_string(),
            loss: loss / data.len() as f64,
            ppl: Some((nll / tokens as f64).exp()),
        };
        log::debug!("{split} epoch {epoch}: loss {:.4} ppl {:.3}", entry.loss, entry.ppl.unwrap_or(f64::NAN));
        log.push(entry);
    }
    if model.params.iter().any(|p| !p.is_finite()) {
        return Err(Error::NonFinite {
            step: format!("{split} final parameters"),
        });
    }
    Ok(log)
}

/// Generation teacher: NLL on the paired data. The vocabulary is supplied by
/// the caller so that students trained later share it.
pub fn train_gen_teacher(dp: &PairedDataset, vocab: Vocab, hyper: &LmHyper) -> Result<(WindowLm, Vec<EpochLog>)> {
    if dp.is_empty() {
        return Err(Error::InvalidInput("paired dataset is empty".into()));
    }
    let mut model = WindowLm::new(vocab, hyper.shape, Role::Teacher, hyper.seed);
    let data: Vec<EncodedPair> = dp
        .items
        .iter()
        .map(|ex| model.encode(&ex.post.tokens, &ex.response.tokens))
        .collect();
    let log = fit_lm(&mut model, &data, None, 0.0, hyper, "gen_teacher")?;
    Ok((model, log))
}

/// Generation student on the data selected by `mode`, with `alpha_g` times
/// the KD term against the frozen teacher (dropped in `WoMl`).
pub fn train_gen_student(
    dp: &PairedDataset,
    da: &PairedDataset,
    teacher: &WindowLm,
    alpha_g: f64,
    hyper: &LmHyper,
    mode: StudentMode,
) -> Result<(WindowLm, Vec<EpochLog>)> {
    let pairs = mode.select(dp, da)?;
    let mut model = WindowLm::new(teacher.vocab.clone(), hyper.shape, Role::Student, hyper.seed);
    let data: Vec<EncodedPair> = pairs
        .iter()
        .map(|ex| model.encode(&ex.post.tokens, &ex.response.tokens))
        .collect();
    let alpha = if mode.uses_kd() { alpha_g } else { 0.0 };
    let soft: Option<Vec<Vec<Vec<f64>>>> =
        (alpha != 0.0).then(|| data.par_iter().map(|p| teacher.soft_targets(p)).collect());
    let split = format!("gen_student_{}", mode.name());
    let log = fit_lm(&mut model, &data, soft.as_deref(), alpha, hyper, &split)?;
    Ok((model, log))
}
