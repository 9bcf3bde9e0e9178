//! Window language model for response generation.
//!
//! The model reads the sequence `BOS post SEP response EOS` and predicts each
//! response token (and the final EOS) from the last `window` tokens before it:
//!
//! ```text
//! e = mean(embed[ctx]);  a = tanh(W1·e + b1);  P(·|ctx) = softmax(W2·a + b2)
//! ```
//!
//! All parameters live in one flat vector laid out as
//! `[embed | W1 | b1 | W2 | b2]`, which keeps SGD updates and finite-difference
//! checks trivial.

use std::collections::HashMap;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::loss::clamp_prob;
use crate::corpus::{PairedExample, Token};
use crate::error::{Error, Result};

pub const BOS: u32 = 0;
pub const SEP: u32 = 1;
pub const EOS: u32 = 2;
pub const UNK: u32 = 3;
const SPECIALS: [&str; 4] = ["<bos>", "<sep>", "<eos>", "<unk>"];
const EMBED_INIT: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Vocab {
    tokens: Vec<Token>,
    index: HashMap<Token, u32>,
}

impl Vocab {
    /// Specials first, then tokens in first-occurrence order.
    pub fn build<'a, I>(seqs: I) -> Self
    where
        I: IntoIterator<Item = &'a [Token]>,
    {
        let mut v = Self::from_tokens(SPECIALS.iter().map(|s| s.to_string()).collect());
        for seq in seqs {
            for t in seq {
                if !v.index.contains_key(t) {
                    v.index.insert(t.clone(), v.tokens.len() as u32);
                    v.tokens.push(t.clone());
                }
            }
        }
        v
    }

    fn from_tokens(tokens: Vec<Token>) -> Self {
        let index = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i as u32))
            .collect();
        Self { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> u32 {
        self.index.get(token).copied().unwrap_or(UNK)
    }

    pub fn token(&self, id: u32) -> &str {
        &self.tokens[id as usize]
    }

    pub fn tokens(&self) -> &[Token] {
        &self.tokens
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LmShape {
    pub dim: usize,
    pub hidden: usize,
    pub window: usize,
}

impl Default for LmShape {
    fn default() -> Self {
        Self {
            dim: 32,
            hidden: 64,
            window: 8,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Teacher,
    Student,
}

/// A pair mapped to vocabulary ids; targets are `seq[start..]`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EncodedPair {
    pub seq: Vec<u32>,
    pub start: usize,
}

impl EncodedPair {
    pub fn targets(&self) -> usize {
        self.seq.len() - self.start
    }

    pub fn positions(&self, window: usize) -> impl Iterator<Item = (&[u32], u32)> + '_ {
        (self.start..self.seq.len()).map(move |t| (&self.seq[t.saturating_sub(window)..t], self.seq[t]))
    }
}

/// Intermediate values of one forward pass, kept for backprop.
#[derive(Debug, Clone)]
pub struct Activation {
    pub pooled: Vec<f64>,
    pub hidden: Vec<f64>,
    pub probs: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossParts {
    pub nll: f64,
    pub kd: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WindowLm {
    pub vocab: Vocab,
    pub shape: LmShape,
    pub role: Role,
    pub params: Vec<f64>,
}

struct Offsets {
    w1: usize,
    b1: usize,
    w2: usize,
    b2: usize,
    end: usize,
}

fn offsets(v: usize, s: &LmShape) -> Offsets {
    let w1 = v * s.dim;
    let b1 = w1 + s.hidden * s.dim;
    let w2 = b1 + s.hidden;
    let b2 = w2 + v * s.hidden;
    Offsets {
        w1,
        b1,
        w2,
        b2,
        end: b2 + v,
    }
}

impl WindowLm {
    pub fn zeros(vocab: Vocab, shape: LmShape, role: Role) -> Self {
        assert!(shape.window >= 1 && shape.dim >= 1 && shape.hidden >= 1);
        let n = offsets(vocab.len(), &shape).end;
        Self {
            vocab,
            shape,
            role,
            params: vec![0.0; n],
        }
    }

    /// Seeded uniform initialization; biases start at zero. Embeddings start
    /// small so rows the model never trains barely move the pooled context.
    pub fn new(vocab: Vocab, shape: LmShape, role: Role, seed: u64) -> Self {
        let mut m = Self::zeros(vocab, shape, role);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let o = offsets(m.vocab.len(), &shape);
        let w1_scale = 1.0 / (shape.dim as f64).sqrt();
        let w2_scale = 1.0 / (shape.hidden as f64).sqrt();
        for (i, p) in m.params.iter_mut().enumerate() {
            *p = if i < o.w1 {
                rng.gen_range(-EMBED_INIT..EMBED_INIT)
            } else if i < o.b1 {
                rng.gen_range(-w1_scale..w1_scale)
            } else if (o.w2..o.b2).contains(&i) {
                rng.gen_range(-w2_scale..w2_scale)
            } else {
                0.0
            };
        }
        m
    }

    fn offsets(&self) -> Offsets {
        offsets(self.vocab.len(), &self.shape)
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab.len()
    }

    pub fn encode(&self, post: &[Token], response: &[Token]) -> EncodedPair {
        let mut seq = Vec::with_capacity(post.len() + response.len() + 3);
        seq.push(BOS);
        seq.extend(post.iter().map(|t| self.vocab.id(t)));
        seq.push(SEP);
        let start = seq.len();
        seq.extend(response.iter().map(|t| self.vocab.id(t)));
        seq.push(EOS);
        EncodedPair { seq, start }
    }

    pub fn forward(&self, ctx: &[u32]) -> Activation {
        let (d, h, v) = (self.shape.dim, self.shape.hidden, self.vocab.len());
        let o = self.offsets();
        let p = &self.params;
        let mut pooled = vec![0.0; d];
        for &t in ctx {
            let row = &p[t as usize * d..(t as usize + 1) * d];
            for (e, x) in pooled.iter_mut().zip(row) {
                *e += x;
            }
        }
        let inv = 1.0 / ctx.len().max(1) as f64;
        pooled.iter_mut().for_each(|e| *e *= inv);

        let hidden: Vec<f64> = (0..h)
            .map(|k| {
                let row = &p[o.w1 + k * d..o.w1 + (k + 1) * d];
                let z: f64 = row.iter().zip(&pooled).map(|(w, e)| w * e).sum();
                (z + p[o.b1 + k]).tanh()
            })
            .collect();

        let mut probs: Vec<f64> = (0..v)
            .map(|j| {
                let row = &p[o.w2 + j * h..o.w2 + (j + 1) * h];
                row.iter().zip(&hidden).map(|(w, a)| w * a).sum::<f64>() + p[o.b2 + j]
            })
            .collect();
        let max = probs.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for z in probs.iter_mut() {
            *z = (*z - max).exp();
            total += *z;
        }
        probs.iter_mut().for_each(|z| *z /= total);
        Activation {
            pooled,
            hidden,
            probs,
        }
    }

    /// Backpropagates `dlogits` through the activation of context `ctx` and
    /// accumulates into `grad` (same layout as `params`).
    pub fn backward(&self, ctx: &[u32], act: &Activation, dlogits: &[f64], grad: &mut [f64]) {
        let (d, h) = (self.shape.dim, self.shape.hidden);
        let o = self.offsets();
        let p = &self.params;
        let mut dhidden = vec![0.0; h];
        for (j, &dz) in dlogits.iter().enumerate() {
            if dz == 0.0 {
                continue;
            }
            grad[o.b2 + j] += dz;
            let base = o.w2 + j * h;
            for k in 0..h {
                grad[base + k] += dz * act.hidden[k];
                dhidden[k] += p[base + k] * dz;
            }
        }
        let mut dpooled = vec![0.0; d];
        for k in 0..h {
            let dpre = dhidden[k] * (1.0 - act.hidden[k] * act.hidden[k]);
            grad[o.b1 + k] += dpre;
            let base = o.w1 + k * d;
            for c in 0..d {
                grad[base + c] += dpre * act.pooled[c];
                dpooled[c] += p[base + c] * dpre;
            }
        }
        let inv = 1.0 / ctx.len().max(1) as f64;
        for &t in ctx {
            let base = t as usize * d;
            for c in 0..d {
                grad[base + c] += dpooled[c] * inv;
            }
        }
    }

    /// Teacher distributions at every target position of `pair`.
    pub fn soft_targets(&self, pair: &EncodedPair) -> Vec<Vec<f64>> {
        pair.positions(self.shape.window)
            .map(|(ctx, _)| self.forward(ctx).probs)
            .collect()
    }

    /// NLL and KD summed over the response positions of `pair`. When `grad` is
    /// given, the gradient of `nll + alpha·kd` is accumulated into it.
    pub fn pair_loss(
        &self,
        pair: &EncodedPair,
        teacher: Option<&[Vec<f64>]>,
        alpha: f64,
        mut grad: Option<&mut [f64]>,
    ) -> LossParts {
        let mut parts = LossParts::default();
        let use_kd = teacher.is_some() && alpha != 0.0;
        for (pos, (ctx, target)) in pair.positions(self.shape.window).enumerate() {
            let act = self.forward(ctx);
            parts.nll -= clamp_prob(act.probs[target as usize]).ln();
            let soft = teacher.map(|t| t[pos].as_slice());
            if let Some(q) = soft {
                parts.kd -= q
                    .iter()
                    .zip(&act.probs)
                    .map(|(qj, pj)| qj * clamp_prob(*pj).ln())
                    .sum::<f64>();
            }
            if let Some(g) = grad.as_deref_mut() {
                let a = if use_kd { alpha } else { 0.0 };
                let mut dz: Vec<f64> = act.probs.iter().map(|p| (1.0 + a) * p).collect();
                dz[target as usize] -= 1.0;
                if let (Some(q), true) = (soft, use_kd) {
                    for (d, qj) in dz.iter_mut().zip(q) {
                        *d -= a * qj;
                    }
                }
                self.backward(ctx, &act, &dz, g);
            }
        }
        parts
    }

    /// Greedy decoding; specials other than EOS are never emitted.
    pub fn generate(&self, post: &[Token], max_len: usize) -> Vec<Token> {
        let mut seq: Vec<u32> = std::iter::once(BOS)
            .chain(post.iter().map(|t| self.vocab.id(t)))
            .chain(std::iter::once(SEP))
            .collect();
        let mut out = Vec::new();
        for _ in 0..max_len {
            let ctx = &seq[seq.len().saturating_sub(self.shape.window)..];
            let probs = self.forward(ctx).probs;
            let mut best = EOS;
            for (j, &p) in probs.iter().enumerate() {
                let j = j as u32;
                if matches!(j, BOS | SEP | UNK) {
                    continue;
                }
                if p > probs[best as usize] {
                    best = j;
                }
            }
            if best == EOS {
                break;
            }
            out.push(self.vocab.token(best).to_string());
            seq.push(best);
        }
        out
    }

    pub fn to_checkpoint(&self) -> LmCheckpoint {
        LmCheckpoint {
            version: LM_CHECKPOINT_VERSION,
            kind: "window_lm".into(),
            role: self.role,
            shape: self.shape,
            vocab: self.vocab.tokens[SPECIALS.len()..].to_vec(),
            params: self.params.clone(),
        }
    }

    pub fn from_checkpoint(ck: LmCheckpoint) -> Result<Self> {
        if ck.version != LM_CHECKPOINT_VERSION || ck.kind != "window_lm" {
            return Err(Error::InvalidInput(format!(
                "not a version {LM_CHECKPOINT_VERSION} window_lm checkpoint"
            )));
        }
        let mut tokens: Vec<Token> = SPECIALS.iter().map(|s| s.to_string()).collect();
        tokens.extend(ck.vocab);
        let mut m = Self::zeros(Vocab::from_tokens(tokens), ck.shape, ck.role);
        if m.params.len() != ck.params.len() {
            return Err(Error::InvalidInput(format!(
                "checkpoint holds {} parameters, shape needs {}",
                ck.params.len(),
                m.params.len()
            )));
        }
        m.params = ck.params;
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_string(&self.to_checkpoint())?;
        std::fs::write(path, json).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(serde_json::from_str(&text)?)
    }
}

pub const LM_CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LmCheckpoint {
    pub version: u32,
    pub kind: String,
    pub role: Role,
    pub shape: LmShape,
    /// Non-special tokens in id order (ids start after the four specials).
    pub vocab: Vec<Token>,
    pub params: Vec<f64>,
}

fn check_vocab(teacher: &WindowLm, student: &WindowLm) -> Result<()> {
    if teacher.vocab != student.vocab {
        return Err(Error::VocabMismatch);
    }
    Ok(())
}

/// −Σ ln P(y_i | y_<i, X) over response tokens and the closing EOS.
pub fn gen_nll(model: &WindowLm, pair: &PairedExample) -> f64 {
    let enc = model.encode(&pair.post.tokens, &pair.response.tokens);
    model.pair_loss(&enc, None, 0.0, None).nll
}

/// Full-vocabulary soft cross-entropy from a frozen teacher, summed over
/// response positions.
pub fn gen_kd(teacher: &WindowLm, student: &WindowLm, pair: &PairedExample) -> Result<f64> {
    check_vocab(teacher, student)?;
    let enc = student.encode(&pair.post.tokens, &pair.response.tokens);
    let soft = teacher.soft_targets(&enc);
    Ok(student.pair_loss(&enc, Some(&soft), 1.0, None).kd)
}

pub fn gen_total(student: &WindowLm, teacher: &WindowLm, alpha_g: f64, pair: &PairedExample) -> Result<f64> {
    check_vocab(teacher, student)?;
    let enc = student.encode(&pair.post.tokens, &pair.response.tokens);
    if alpha_g == 0.0 {
        return Ok(student.pair_loss(&enc, None, 0.0, None).nll);
    }
    let soft = teacher.soft_targets(&enc);
    let parts = student.pair_loss(&enc, Some(&soft), alpha_g, None);
    Ok(parts.nll + alpha_g * parts.kd)
}

/// Loss and gradient of [`gen_total`] with respect to the student's parameters.
pub fn gen_total_grad(
    student: &WindowLm,
    teacher: &WindowLm,
    alpha_g: f64,
    pair: &PairedExample,
) -> Result<(f64, Vec<f64>)> {
    check_vocab(teacher, student)?;
    let enc = student.encode(&pair.post.tokens, &pair.response.tokens);
    let soft = teacher.soft_targets(&enc);
    let mut grad = vec![0.0; student.params.len()];
    let parts = student.pair_loss(&enc, Some(&soft), alpha_g, Some(&mut grad));
    Ok((parts.nll + alpha_g * parts.kd, grad))
}
