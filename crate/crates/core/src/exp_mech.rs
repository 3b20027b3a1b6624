//! The exponential mechanism over a finite candidate list.
//!
//! Candidates carry scores to be *minimized* (lower is better, e.g. empirical
//! loss), and candidate `i` is selected with probability proportional to
//! `exp(-epsilon * score_i / (2 * sensitivity))`, where `sensitivity` bounds
//! how much one dataset row can move any score. Selection is exact
//! categorical sampling by inverse CDF after shifting scores by their
//! minimum (the log-sum-exp trick), so weights never overflow and adding a
//! constant to all scores leaves the draw sequence unchanged.

use rand::Rng;

use crate::error::{Error, Result};
use crate::rng::RngStream;

fn validate(scores: &[f64], sensitivity: f64, epsilon: f64) -> Result<()> {
    if scores.is_empty() {
        return Err(Error::invalid(
            "exponential mechanism needs at least one candidate",
        ));
    }
    if let Some(bad) = scores.iter().find(|s| !s.is_finite()) {
        return Err(Error::invalid(format!("scores must be finite, got {bad}")));
    }
    if !(sensitivity > 0.0) || !sensitivity.is_finite() {
        return Err(Error::invalid(format!(
            "score sensitivity must be finite and > 0, got {sensitivity}"
        )));
    }
    if epsilon < 0.0 || !epsilon.is_finite() {
        return Err(Error::invalid(format!(
            "epsilon must be finite and >= 0, got {epsilon}"
        )));
    }
    Ok(())
}

/// Selection probabilities of the mechanism; sums to 1. `epsilon = 0`
/// degenerates to the uniform distribution.
pub fn exp_mech_probabilities(scores: &[f64], sensitivity: f64, epsilon: f64) -> Result<Vec<f64>> {
    validate(scores, sensitivity, epsilon)?;
    let min = scores.iter().copied().fold(f64::INFINITY, f64::min);
    let scale = epsilon / (2.0 * sensitivity);
    let weights: Vec<f64> = scores.iter().map(|s| (-(s - min) * scale).exp()).collect();
    let total: f64 = weights.iter().sum();
    Ok(weights.into_iter().map(|w| w / total).collect())
}

/// Draw one candidate index with an explicit generator. The draw consumes a
/// single uniform variate.
pub fn exp_mech_sample_with(
    scores: &[f64],
    sensitivity: f64,
    epsilon: f64,
    rng: &mut impl Rng,
) -> Result<usize> {
    let probs = exp_mech_probabilities(scores, sensitivity, epsilon)?;
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return Ok(i);
        }
    }
    Ok(probs.len() - 1) // u landed on accumulated rounding slack
}

/// Draw one candidate index deterministically from `rng`: the same stream
/// and the same (shift-equivalent) scores always select the same index.
pub fn exp_mech_sample(
    scores: &[f64],
    sensitivity: f64,
    epsilon: f64,
    rng: &RngStream,
) -> Result<usize> {
    exp_mech_sample_with(scores, sensitivity, epsilon, &mut rng.rng())
}
