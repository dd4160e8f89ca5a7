//! Straight-loop reference implementations of the fusion attention, the
//! pointer distribution and the sequence loss. They share no code with the
//! vectorized paths and exist to cross-check them.
//!
//! Matrices are row lists; a weight `w` maps `x` to `y[o] = sum_i x[i] * w[i][o]`.

use crate::nn::graph::PROB_CLAMP;
use crate::nn::Mat;

pub fn to_rows(m: &Mat) -> Vec<Vec<f64>> {
    (0..m.rows).map(|r| m.row(r).to_vec()).collect()
}

fn project(x: &[f64], w: &[Vec<f64>]) -> Vec<f64> {
    let out = w.first().map_or(0, Vec::len);
    let mut y = vec![0.0; out];
    for (i, xi) in x.iter().enumerate() {
        for o in 0..out {
            y[o] += xi * w[i][o];
        }
    }
    y
}

fn softmax_masked(scores: &[f64], allowed: Option<&[bool]>) -> Vec<f64> {
    let ok = |j: usize| allowed.is_none_or(|m| m[j]);
    let mut max = f64::NEG_INFINITY;
    for (j, &s) in scores.iter().enumerate() {
        if ok(j) && s > max {
            max = s;
        }
    }
    let mut e = vec![0.0; scores.len()];
    let mut z = 0.0;
    for j in 0..scores.len() {
        if ok(j) {
            e[j] = (scores[j] - max).exp();
            z += e[j];
        }
    }
    for x in &mut e {
        *x /= z;
    }
    e
}

/// `softmax((E_S W_Q)(E_F W_K)^T / sqrt(d_k)) (E_F W_V)` computed per head
/// and concatenated.
pub fn fusion(
    es: &[f64],
    ef: &[Vec<f64>],
    wq: &[Vec<f64>],
    wk: &[Vec<f64>],
    wv: &[Vec<f64>],
    heads: usize,
) -> Vec<f64> {
    let q = project(es, wq);
    let keys: Vec<Vec<f64>> = ef.iter().map(|f| project(f, wk)).collect();
    let values: Vec<Vec<f64>> = ef.iter().map(|f| project(f, wv)).collect();
    let d = q.len();
    let dk = d / heads;
    let mut out = vec![0.0; d];
    for h in 0..heads {
        let cols = h * dk..(h + 1) * dk;
        let scores: Vec<f64> = keys
            .iter()
            .map(|k| cols.clone().map(|c| q[c] * k[c]).sum::<f64>() / (dk as f64).sqrt())
            .collect();
        let a = softmax_masked(&scores, None);
        for (j, v) in values.iter().enumerate() {
            for c in cols.clone() {
                out[c] += a[j] * v[c];
            }
        }
    }
    out
}

/// `softmax_j(v . tanh(W1 fusion + W2 h + W3 c_j))` over the allowed candidates;
/// disallowed candidates get probability zero.
#[allow(clippy::too_many_arguments)]
pub fn pointer_distribution(
    fusion: &[f64],
    h: &[f64],
    candidates: &[Vec<f64>],
    w1: &[Vec<f64>],
    w2: &[Vec<f64>],
    w3: &[Vec<f64>],
    v: &[f64],
    allowed: &[bool],
) -> Vec<f64> {
    let a = project(fusion, w1);
    let b = project(h, w2);
    let scores: Vec<f64> = candidates
        .iter()
        .map(|c| {
            let e = project(c, w3);
            (0..v.len()).map(|k| v[k] * (a[k] + b[k] + e[k]).tanh()).sum()
        })
        .collect();
    softmax_masked(&scores, Some(allowed))
}

fn bce_term(y: f64, p: f64) -> f64 {
    let p = p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
    -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
}

/// Masked, EOS-weighted BCE. `preds[i][j][c]` is the probability of
/// candidate `c` at position `j` of sample `i`; `targets[i][j]` the correct
/// candidate; positions `j >= valid[i]` are masked and position
/// `valid[i] - 1` (the EOS position) is weighted by `alpha`.
pub fn masked_weighted_bce(preds: &[Vec<Vec<f64>>], targets: &[Vec<usize>], valid: &[usize], alpha: f64) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for i in 0..preds.len() {
        den += valid[i] as f64;
        for j in 0..preds[i].len() {
            let m = if j < valid[i] { 1.0 } else { 0.0 };
            let w = if j + 1 == valid[i] { alpha } else { 1.0 };
            for c in 0..preds[i][j].len() {
                let y = if targets[i][j] == c { 1.0 } else { 0.0 };
                num += m * w * bce_term(y, preds[i][j][c]);
            }
        }
    }
    num / den
}

/// Unmasked BCE averaged over every sample and position.
pub fn standard_bce(preds: &[Vec<Vec<f64>>], targets: &[Vec<usize>]) -> f64 {
    let mut num = 0.0;
    let mut count = 0.0;
    for i in 0..preds.len() {
        for j in 0..preds[i].len() {
            count += 1.0;
            for c in 0..preds[i][j].len() {
                let y = if targets[i][j] == c { 1.0 } else { 0.0 };
                num += bce_term(y, preds[i][j][c]);
            }
        }
    }
    num / count
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        // one query, two keys with scores 0 and ln 3 after scaling
        let es = [1.0];
        let ef = vec![vec![0.0], vec![3f64.ln()]];
        let id = vec![vec![1.0]];
        let f = fusion(&es, &ef, &id, &id, &id, 1);
        assert!((f[0] - 0.75 * 3f64.ln()).abs() < 1e-15);

        let p = pointer_distribution(
            &[0.0],
            &[0.0],
            &[vec![0.0], vec![1.0], vec![2.0]],
            &id,
            &id,
            &id,
            &[1.0],
            &[true, false, true],
        );
        let (e0, e2) = (1.0, 2f64.tanh().exp());
        assert_eq!(p[1], 0.0);
        assert!((p[0] - e0 / (e0 + e2)).abs() < 1e-15);

        let bce = standard_bce(&[vec![vec![0.5, 0.5]]], &[vec![0]]);
        assert!((bce - 2.0 * 2f64.ln()).abs() < 1e-15);
        let w = masked_weighted_bce(&[vec![vec![0.5, 0.5], vec![0.9, 0.1]]], &[vec![0, 1]], &[1], 3.0);
        assert!((w - 3.0 * 2.0 * 2f64.ln()).abs() < 1e-15);
    }
}
