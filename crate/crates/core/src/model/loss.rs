//! Matching losses: binary NLL, soft-target cross-entropy against a frozen
//! teacher, and their weighted sum.

use crate::matcher::{sigmoid, FitExample, MatchScorer};

pub const PROB_FLOOR: f64 = 1e-12;

/// Clamps a probability into [1e-12, 1 − 1e-12] before it reaches a log.
#[inline]
pub fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_FLOOR, 1.0 - PROB_FLOOR)
}

pub fn match_nll(p1: f64, label: u8) -> f64 {
    let p1 = clamp_prob(p1);
    let l = label as f64;
    -(1.0 - l) * (1.0 - p1).ln() - l * p1.ln()
}

/// −Σ_i teacher_i · ln student_i over the two matching labels.
pub fn match_kd(teacher: [f64; 2], student: [f64; 2]) -> f64 {
    -(teacher[0] * clamp_prob(student[0]).ln() + teacher[1] * clamp_prob(student[1]).ln())
}

/// NLL plus `alpha_m` times KD against the frozen teacher, for one example.
pub fn match_total(ex: &FitExample, student: &MatchScorer, teacher: &MatchScorer, alpha_m: f64) -> f64 {
    let p1 = sigmoid(student.logit(&ex.features));
    let t1 = sigmoid(teacher.logit(&ex.features));
    let nll = match_nll(p1, ex.label);
    if alpha_m == 0.0 {
        return nll;
    }
    nll + alpha_m * match_kd([1.0 - t1, t1], [1.0 - p1, p1])
}

/// Gradient of [`match_total`] with respect to the student's weights
/// followed by its bias.
pub fn match_total_grad(ex: &FitExample, student: &MatchScorer, teacher: &MatchScorer, alpha_m: f64) -> Vec<f64> {
    let p1 = sigmoid(student.logit(&ex.features));
    let t1 = sigmoid(teacher.logit(&ex.features));
    let g = (p1 - ex.label as f64) + alpha_m * (p1 - t1);
    let mut grad = vec![0.0; student.dim() + 1];
    for &(i, v) in &ex.features.entries {
        grad[i as usize] += g * v;
    }
    grad[student.dim()] = g;
    grad
}
