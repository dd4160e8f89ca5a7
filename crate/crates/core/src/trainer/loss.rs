//! Masked, EOS-weighted binary cross-entropy over pointer distributions.
//!
//! Each predicted position carries a distribution over the N + 1 candidates
//! and a one-hot target; the per-position loss sums the binary cross-entropy
//! of every candidate.

use crate::error::{Error, Result};
use crate::nn::graph::PROB_CLAMP;
use crate::nn::Mat;

use super::labels::LabelSequence;

fn position_bce(row: &[f64], target: usize) -> f64 {
    row.iter()
        .enumerate()
        .map(|(c, &p)| {
            let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
            if c == target {
                -p.ln()
            } else {
                -(1.0 - p).ln()
            }
        })
        .sum()
}

/// Per-position weights for one sample: 1 on valid positions, `alpha` on
/// the EOS position, 0 beyond it.
pub fn position_weights(label: &LabelSequence, positions: usize, alpha: f64) -> Vec<f64> {
    (0..positions)
        .map(|j| {
            if j + 1 < label.valid_length {
                1.0
            } else if j + 1 == label.valid_length {
                alpha
            } else {
                0.0
            }
        })
        .collect()
}

/// `predictions[i]` holds one row per position (at least `valid_length`
/// rows); the loss is normalized by the summed valid lengths.
pub fn masked_weighted_bce(predictions: &[Mat], labels: &[LabelSequence], alpha: f64) -> Result<f64> {
    if predictions.len() != labels.len() || labels.is_empty() {
        return Err(Error::Shape("one prediction matrix per label sequence required".into()));
    }
    let total_valid: usize = labels.iter().map(|l| l.valid_length).sum();
    let mut sum = 0.0;
    for (p, l) in predictions.iter().zip(labels) {
        if p.rows < l.valid_length {
            return Err(Error::Shape(format!(
                "{} prediction rows for {} valid positions",
                p.rows, l.valid_length
            )));
        }
        let w = position_weights(l, p.rows, alpha);
        for (j, wj) in w.iter().enumerate().filter(|(_, w)| **w != 0.0) {
            sum += wj * position_bce(p.row(j), l.tokens[j + 1]);
        }
    }
    let loss = sum / total_valid as f64;
    if !loss.is_finite() {
        return Err(Error::Diverged(format!("loss evaluated to {loss}")));
    }
    Ok(loss)
}

/// Unmasked mean over every sample and every position.
pub fn standard_bce(predictions: &[Mat], targets: &[Vec<usize>]) -> f64 {
    let positions: usize = predictions.iter().map(|p| p.rows).sum();
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .flat_map(|(p, t)| (0..p.rows).map(move |j| position_bce(p.row(j), t[j])))
        .sum();
    sum / positions as f64
}
