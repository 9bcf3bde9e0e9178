use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::lm::WindowLm;
use crate::matcher::MatchScorer;

/// Flat read/write access to a model's trainable parameters.
pub trait Parameterized {
    fn param_count(&self) -> usize;
    fn param(&self, i: usize) -> f64;
    fn set_param(&mut self, i: usize, value: f64);
}

impl Parameterized for WindowLm {
    fn param_count(&self) -> usize {
        self.params.len()
    }

    fn param(&self, i: usize) -> f64 {
        self.params[i]
    }

    fn set_param(&mut self, i: usize, value: f64) {
        self.params[i] = value;
    }
}

/// Weights followed by the bias.
impl Parameterized for MatchScorer {
    fn param_count(&self) -> usize {
        self.weights.len() + 1
    }

    fn param(&self, i: usize) -> f64 {
        if i == self.weights.len() {
            self.bias
        } else {
            self.weights[i]
        }
    }

    fn set_param(&mut self, i: usize, value: f64) {
        if i == self.weights.len() {
            self.bias = value;
        } else {
            self.weights[i] = value;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    pub checked: usize,
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Compares `analytic` against Richardson-extrapolated central differences
/// (steps `epsilon` and `epsilon / 2`) of `loss` on a seeded
/// sample of at least `samples` parameters (all of them if fewer exist).
/// Half the sample is drawn from parameters with a non-zero analytic
/// gradient so sparse models are not checked only where both sides are zero.
pub fn grad_check<M, F>(
    model: &mut M,
    loss: F,
    analytic: &[f64],
    epsilon: f64,
    samples: usize,
    seed: u64,
) -> GradCheckReport
where
    M: Parameterized,
    F: Fn(&M) -> f64,
{
    let n = model.param_count();
    assert_eq!(analytic.len(), n, "gradient length does not match parameters");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut chosen = BTreeSet::new();
    if n <= samples {
        chosen.extend(0..n);
    } else {
        let mut active: Vec<usize> = (0..n).filter(|&i| analytic[i] != 0.0).collect();
        active.shuffle(&mut rng);
        chosen.extend(active.into_iter().take(samples / 2));
        while chosen.len() < samples {
            chosen.insert(rng.gen_range(0..n));
        }
    }
    let mut max_rel_error: f64 = 0.0;
    for &i in &chosen {
        let mut central = |h: f64| {
            let orig = model.param(i);
            model.set_param(i, orig + h);
            let up = loss(model);
            model.set_param(i, orig - h);
            let down = loss(model);
            model.set_param(i, orig);
            (up - down) / (2.0 * h)
        };
        // one Richardson step cancels the h² term, so epsilon can be large
        // enough that rounding in the loss does not swamp tiny gradients
        let numeric = (4.0 * central(epsilon / 2.0) - central(epsilon)) / 3.0;
        max_rel_error = max_rel_error.max(relative_error(analytic[i], numeric));
    }
    GradCheckReport {
        max_rel_error,
        checked: chosen.len(),
    }
}
