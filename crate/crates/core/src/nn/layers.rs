//! Parameterized building blocks shared by the encoder and the generator.

use rand::Rng;

use super::graph::{Graph, Var};
use super::params::{ParamId, ParamStore};
use super::tensor::Mat;

#[derive(Debug, Clone, Copy)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, inp: usize, out: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: store.add(format!("{name}.w"), Mat::glorot(inp, out, rng)),
            b: Some(store.add(format!("{name}.b"), Mat::zeros(1, out))),
        }
    }

    pub fn no_bias(store: &mut ParamStore, name: &str, inp: usize, out: usize, rng: &mut impl Rng) -> Self {
        Self {
            w: store.add(format!("{name}.w"), Mat::glorot(inp, out, rng)),
            b: None,
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let w = g.param(self.w);
        let y = g.matmul(x, w);
        match self.b {
            Some(b) => {
                let b = g.param(b);
                g.add_row(y, b)
            }
            None => y,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Norm {
    pub gain: ParamId,
    pub bias: ParamId,
}

impl Norm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Mat::filled(1, dim, 1.0)),
            bias: store.add(format!("{name}.bias"), Mat::zeros(1, dim)),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var) -> Var {
        let (gain, bias) = (g.param(self.gain), g.param(self.bias));
        g.layer_norm(x, gain, bias)
    }
}

/// Scaled dot-product attention split across `heads`.
#[derive(Debug, Clone, Copy)]
pub struct Attention {
    pub q: Linear,
    pub k: Linear,
    pub v: Linear,
    pub out: Option<Linear>,
    pub heads: usize,
}

impl Attention {
    /// `query_dim` may differ from `dim`; `W_Q` then maps between them.
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        query_dim: usize,
        dim: usize,
        heads: usize,
        out_proj: bool,
        rng: &mut impl Rng,
    ) -> Self {
        assert_eq!(dim % heads, 0, "model width {dim} not divisible by {heads} heads");
        Self {
            q: Linear::new(store, &format!("{name}.q"), query_dim, dim, rng),
            k: Linear::new(store, &format!("{name}.k"), dim, dim, rng),
            v: Linear::new(store, &format!("{name}.v"), dim, dim, rng),
            out: out_proj.then(|| Linear::new(store, &format!("{name}.o"), dim, dim, rng)),
            heads,
        }
    }

    /// Bias-free projections and no output projection: plain
    /// `softmax(Q K^T / sqrt(d_k)) V` per head.
    pub fn unbiased(
        store: &mut ParamStore,
        name: &str,
        query_dim: usize,
        dim: usize,
        heads: usize,
        rng: &mut impl Rng,
    ) -> Self {
        assert_eq!(dim % heads, 0, "model width {dim} not divisible by {heads} heads");
        Self {
            q: Linear::no_bias(store, &format!("{name}.q"), query_dim, dim, rng),
            k: Linear::no_bias(store, &format!("{name}.k"), dim, dim, rng),
            v: Linear::no_bias(store, &format!("{name}.v"), dim, dim, rng),
            out: None,
            heads,
        }
    }

    /// `allowed` is a row-major `queries x keys` mask (true = may attend).
    pub fn forward(&self, g: &mut Graph, query: Var, memory: Var, allowed: Option<&[bool]>) -> Var {
        let q = self.q.forward(g, query);
        let k = self.k.forward(g, memory);
        let v = self.v.forward(g, memory);
        let dim = g.shape(q).1;
        let dh = dim / self.heads;
        let scale = 1.0 / (dh as f64).sqrt();
        let mut outs = Vec::with_capacity(self.heads);
        for h in 0..self.heads {
            let (qh, kh, vh) = if self.heads == 1 {
                (q, k, v)
            } else {
                (
                    g.slice_cols(q, h * dh, dh),
                    g.slice_cols(k, h * dh, dh),
                    g.slice_cols(v, h * dh, dh),
                )
            };
            let s = g.matmul_nt(qh, kh);
            let s = g.scale(s, scale);
            let a = g.softmax(s, allowed);
            outs.push(g.matmul(a, vh));
        }
        let cat = if outs.len() == 1 { outs[0] } else { g.concat_cols(&outs) };
        match self.out {
            Some(o) => o.forward(g, cat),
            None => cat,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct FeedForward {
    pub l1: Linear,
    pub l2: Linear,
}

impl FeedForward {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize, hidden: usize, rng: &mut impl Rng) -> Self {
        Self {
            l1: Linear::new(store, &format!("{name}.l1"), dim, hidden, rng),
            l2: Linear::new(store, &format!("{name}.l2"), hidden, dim, rng),
        }
    }

    pub fn forward(&self, g: &mut Graph, x: Var, dropout: f64) -> Var {
        let h = self.l1.forward(g, x);
        let h = g.relu(h);
        let h = g.dropout(h, dropout);
        self.l2.forward(g, h)
    }
}

/// Naive reference attention used by tests.
#[cfg(test)]
pub(crate) fn reference_attention(q: &Mat, k: &Mat, v: &Mat, allowed: Option<&[bool]>) -> Mat {
    let scale = 1.0 / (q.cols as f64).sqrt();
    let mut out = Mat::zeros(q.rows, v.cols);
    for i in 0..q.rows {
        let mut w = vec![0.0; k.rows];
        for j in 0..k.rows {
            if allowed.is_some_and(|m| !m[i * k.rows + j]) {
                w[j] = f64::NEG_INFINITY;
                continue;
            }
            w[j] = (0..q.cols).map(|c| q.get(i, c) * k.get(j, c)).sum::<f64>() * scale;
        }
        let max = w.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let e: Vec<f64> = w.iter().map(|x| (x - max).exp()).collect();
        let z: f64 = e.iter().sum();
        for j in 0..k.rows {
            for c in 0..v.cols {
                out.data[i * v.cols + c] += e[j] / z * v.get(j, c);
            }
        }
    }
    out
}
