//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Graph`] records operations as they run; [`Graph::backward`] walks the
//! record in reverse and returns gradients for every parameter touched.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::params::{Gradients, ParamId, ParamStore};
use super::tensor::{gemm, Mat};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

const LN_EPS: f64 = 1e-5;
/// Probability clamp used by the BCE node.
pub const PROB_CLAMP: f64 = 1e-7;

enum Op {
    Input,
    Param(ParamId),
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    Add(Var, Var),
    AddRow(Var, Var),
    Scale(Var, f64),
    MulConst(Var, Mat),
    Relu(Var),
    Tanh(Var),
    Softmax(Var),
    LayerNorm {
        x: Var,
        gain: Var,
        bias: Var,
        xhat: Mat,
        inv_std: Vec<f64>,
    },
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    Scatter {
        x: Var,
        pairs: Vec<(usize, usize)>,
        scale: f64,
    },
    Pointer {
        a: Var,
        b: Var,
        v: Var,
        th: Vec<f64>,
    },
    Bce {
        p: Var,
        targets: Vec<usize>,
        weights: Vec<f64>,
    },
    Sum(Var),
}

struct Node {
    op: Op,
    value: Option<Mat>,
}

pub struct Graph<'p> {
    params: &'p ParamStore,
    nodes: Vec<Node>,
    param_vars: Vec<Option<Var>>,
    rng: Option<ChaCha8Rng>,
}

impl<'p> Graph<'p> {
    /// Inference graph: dropout disabled.
    pub fn new(params: &'p ParamStore) -> Self {
        Self {
            params,
            nodes: Vec::new(),
            param_vars: vec![None; params.len()],
            rng: None,
        }
    }

    /// Training graph: dropout draws from `rng`.
    pub fn training(params: &'p ParamStore, rng: ChaCha8Rng) -> Self {
        Self {
            rng: Some(rng),
            ..Self::new(params)
        }
    }

    pub fn is_training(&self) -> bool {
        self.rng.is_some()
    }

    pub fn params(&self) -> &'p ParamStore {
        self.params
    }

    fn push(&mut self, op: Op, value: Mat) -> Var {
        self.nodes.push(Node { op, value: Some(value) });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Mat {
        match &self.nodes[v.0] {
            Node { op: Op::Param(id), .. } => self.params.value(*id),
            Node { value: Some(m), .. } => m,
            Node { value: None, .. } => unreachable!("non-param node without value"),
        }
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.value(v).shape()
    }

    pub fn input(&mut self, m: Mat) -> Var {
        self.push(Op::Input, m)
    }

    pub fn param(&mut self, id: ParamId) -> Var {
        if let Some(v) = self.param_vars[id.0] {
            return v;
        }
        self.nodes.push(Node {
            op: Op::Param(id),
            value: None,
        });
        let v = Var(self.nodes.len() - 1);
        self.param_vars[id.0] = Some(v);
        v
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.cols, vb.rows, "matmul {:?} x {:?}", va.shape(), vb.shape());
        let mut out = Mat::zeros(va.rows, vb.cols);
        gemm(1.0, va, false, vb, false, 0.0, &mut out);
        self.push(Op::MatMul(a, b), out)
    }

    /// `a * b^T`
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.cols, vb.cols, "matmul_nt {:?} x {:?}^T", va.shape(), vb.shape());
        let mut out = Mat::zeros(va.rows, vb.rows);
        gemm(1.0, va, false, vb, true, 0.0, &mut out);
        self.push(Op::MatMulNT(a, b), out)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), self.shape(b), "add shape mismatch");
        out.add_assign(self.value(b));
        self.push(Op::Add(a, b), out)
    }

    /// Adds the single-row `row` to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let r = self.value(row);
        assert_eq!(r.rows, 1);
        assert_eq!(r.cols, self.value(a).cols, "add_row width mismatch");
        let r = r.data.clone();
        let mut out = self.value(a).clone();
        for chunk in out.data.chunks_mut(r.len()) {
            for (x, y) in chunk.iter_mut().zip(&r) {
                *x += y;
            }
        }
        self.push(Op::AddRow(a, row), out)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let mut out = self.value(a).clone();
        out.scale_assign(s);
        self.push(Op::Scale(a, s), out)
    }

    pub fn mul_const(&mut self, a: Var, m: Mat) -> Var {
        let mut out = self.value(a).clone();
        assert_eq!(out.shape(), m.shape());
        for (x, y) in out.data.iter_mut().zip(&m.data) {
            *x *= y;
        }
        self.push(Op::MulConst(a, m), out)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for x in &mut out.data {
            *x = x.max(0.0);
        }
        self.push(Op::Relu(a), out)
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let mut out = self.value(a).clone();
        for x in &mut out.data {
            *x = x.tanh();
        }
        self.push(Op::Tanh(a), out)
    }

    /// Inverted dropout; identity outside training.
    pub fn dropout(&mut self, a: Var, p: f64) -> Var {
        if p <= 0.0 {
            return a;
        }
        let (rows, cols) = self.shape(a);
        let Some(rng) = self.rng.as_mut() else {
            return a;
        };
        let keep = 1.0 - p;
        let mask = Mat::from_vec(
            rows,
            cols,
            (0..rows * cols)
                .map(|_| if rng.gen::<f64>() < keep { 1.0 / keep } else { 0.0 })
                .collect(),
        );
        self.mul_const(a, mask)
    }

    /// Row-wise softmax. `allowed[r * cols + c] == false` forces probability 0;
    /// every row must allow at least one entry.
    pub fn softmax(&mut self, a: Var, allowed: Option<&[bool]>) -> Var {
        let mut out = self.value(a).clone();
        let cols = out.cols;
        for (r, row) in out.data.chunks_mut(cols).enumerate() {
            let ok = |c: usize| allowed.is_none_or(|m| m[r * cols + c]);
            let max = (0..cols)
                .filter(|&c| ok(c))
                .map(|c| row[c])
                .fold(f64::NEG_INFINITY, f64::max);
            assert!(max > f64::NEG_INFINITY, "softmax row {r} fully masked");
            let mut sum = 0.0;
            for c in 0..cols {
                row[c] = if ok(c) { (row[c] - max).exp() } else { 0.0 };
                sum += row[c];
            }
            for x in row.iter_mut() {
                *x /= sum;
            }
        }
        self.push(Op::Softmax(a), out)
    }

    pub fn layer_norm(&mut self, x: Var, gain: Var, bias: Var) -> Var {
        let vx = self.value(x);
        let (rows, cols) = vx.shape();
        let mut xhat = Mat::zeros(rows, cols);
        let mut inv_std = Vec::with_capacity(rows);
        for r in 0..rows {
            let row = vx.row(r);
            let mean = row.iter().sum::<f64>() / cols as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
            let is = 1.0 / (var + LN_EPS).sqrt();
            inv_std.push(is);
            for (o, v) in xhat.row_mut(r).iter_mut().zip(row) {
                *o = (v - mean) * is;
            }
        }
        let (g, b) = (self.value(gain), self.value(bias));
        let mut out = xhat.clone();
        for r in 0..rows {
            for c in 0..cols {
                out.data[r * cols + c] = out.data[r * cols + c] * g.data[c] + b.data[c];
            }
        }
        self.push(
            Op::LayerNorm {
                x,
                gain,
                bias,
                xhat,
                inv_std,
            },
            out,
        )
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        let rows = self.shape(parts[0]).0;
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut out = Mat::zeros(rows, cols);
        let mut off = 0;
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.rows, rows, "concat_cols row mismatch");
            for r in 0..rows {
                out.data[r * cols + off..r * cols + off + v.cols].copy_from_slice(v.row(r));
            }
            off += v.cols;
        }
        self.push(Op::ConcatCols(parts.to_vec()), out)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        let cols = self.shape(parts[0]).1;
        let mut data = Vec::new();
        for &p in parts {
            let v = self.value(p);
            assert_eq!(v.cols, cols, "concat_rows column mismatch");
            data.extend_from_slice(&v.data);
        }
        let rows = data.len() / cols.max(1);
        self.push(Op::ConcatRows(parts.to_vec()), Mat::from_vec(rows, cols, data))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Var {
        let v = self.value(a);
        let mut out = Mat::zeros(v.rows, len);
        for r in 0..v.rows {
            out.row_mut(r).copy_from_slice(&v.row(r)[start..start + len]);
        }
        self.push(Op::SliceCols(a, start), out)
    }

    /// `out[dst] += scale * a[src]` for every `(src, dst)` pair; `out` has `rows` rows.
    pub fn scatter(&mut self, a: Var, pairs: Vec<(usize, usize)>, rows: usize, scale: f64) -> Var {
        let v = self.value(a);
        let cols = v.cols;
        let mut out = Mat::zeros(rows, cols);
        for &(s, d) in &pairs {
            let src = &v.data[s * cols..(s + 1) * cols];
            for (o, x) in out.data[d * cols..(d + 1) * cols].iter_mut().zip(src) {
                *o += scale * x;
            }
        }
        self.push(Op::Scatter { x: a, pairs, scale }, out)
    }

    /// Selects rows of `a` in the given order.
    pub fn gather_rows(&mut self, a: Var, rows: &[usize]) -> Var {
        let pairs = rows.iter().enumerate().map(|(d, &s)| (s, d)).collect();
        self.scatter(a, pairs, rows.len(), 1.0)
    }

    /// Additive attention scores `out[t][c] = sum_k v[k] * tanh(a[t][k] + b[c][k])`.
    pub fn pointer_scores(&mut self, a: Var, b: Var, v: Var) -> Var {
        let (va, vb, vv) = (self.value(a), self.value(b), self.value(v));
        let d = va.cols;
        assert_eq!(vb.cols, d);
        assert_eq!(vv.shape(), (1, d));
        let (t_n, c_n) = (va.rows, vb.rows);
        let mut th = vec![0.0; t_n * c_n * d];
        let mut out = Mat::zeros(t_n, c_n);
        for t in 0..t_n {
            let ar = va.row(t);
            for c in 0..c_n {
                let br = vb.row(c);
                let base = (t * c_n + c) * d;
                let mut s = 0.0;
                for k in 0..d {
                    let h = (ar[k] + br[k]).tanh();
                    th[base + k] = h;
                    s += vv.data[k] * h;
                }
                out.data[t * c_n + c] = s;
            }
        }
        self.push(Op::Pointer { a, b, v, th }, out)
    }

    /// Weighted binary cross-entropy of each row of `p` against a one-hot
    /// target: `sum_r weights[r] * sum_c -[y log p + (1 - y) log(1 - p)]`,
    /// with probabilities clamped to `[PROB_CLAMP, 1 - PROB_CLAMP]`.
    pub fn bce_one_hot(&mut self, p: Var, targets: Vec<usize>, weights: Vec<f64>) -> Var {
        let vp = self.value(p);
        assert_eq!(targets.len(), vp.rows);
        assert_eq!(weights.len(), vp.rows);
        let mut total = 0.0;
        for r in 0..vp.rows {
            if weights[r] == 0.0 {
                continue;
            }
            let row_loss: f64 = vp
                .row(r)
                .iter()
                .enumerate()
                .map(|(c, &x)| {
                    let x = x.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP);
                    if c == targets[r] {
                        -x.ln()
                    } else {
                        -(1.0 - x).ln()
                    }
                })
                .sum();
            total += weights[r] * row_loss;
        }
        self.push(Op::Bce { p, targets, weights }, Mat::from_vec(1, 1, vec![total]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Op::Sum(a), Mat::from_vec(1, 1, vec![s]))
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.shape(), (1, 1));
        m.data[0]
    }

    /// Gradients of the scalar `root` with respect to every parameter used.
    pub fn backward(&self, root: Var) -> Gradients {
        let mut grads = self.backward_nodes(root);
        let mut out = Gradients::new(self.params);
        for (i, node) in self.nodes.iter().enumerate() {
            if let Op::Param(id) = node.op {
                if let Some(g) = grads[i].take() {
                    out.accumulate(id, g);
                }
            }
        }
        out
    }

    /// Gradient with respect to a non-parameter node (e.g. an input).
    pub fn grad_of(&self, root: Var, wrt: Var) -> Option<Mat> {
        self.backward_nodes(root)[wrt.0].take()
    }

    fn backward_nodes(&self, root: Var) -> Vec<Option<Mat>> {
        assert_eq!(self.shape(root), (1, 1), "backward needs a scalar root");
        let mut grads: Vec<Option<Mat>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[root.0] = Some(Mat::filled(1, 1, 1.0));

        fn acc(grads: &mut [Option<Mat>], v: Var, g: Mat) {
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&g),
                slot @ None => *slot = Some(g),
            }
        }

        for i in (0..=root.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let out = self.nodes[i].value.as_ref();
            match &self.nodes[i].op {
                Op::Input | Op::Param(_) => {
                    grads[i] = Some(g);
                }
                Op::MatMul(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = Mat::zeros(va.rows, va.cols);
                    gemm(1.0, &g, false, vb, true, 0.0, &mut ga);
                    let mut gb = Mat::zeros(vb.rows, vb.cols);
                    gemm(1.0, va, true, &g, false, 0.0, &mut gb);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::MatMulNT(a, b) => {
                    let (va, vb) = (self.value(*a), self.value(*b));
                    let mut ga = Mat::zeros(va.rows, va.cols);
                    gemm(1.0, &g, false, vb, false, 0.0, &mut ga);
                    let mut gb = Mat::zeros(vb.rows, vb.cols);
                    gemm(1.0, &g, true, va, false, 0.0, &mut gb);
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                }
                Op::Add(a, b) => {
                    acc(&mut grads, *b, g.clone());
                    acc(&mut grads, *a, g);
                }
                Op::AddRow(a, row) => {
                    let mut gr = Mat::zeros(1, g.cols);
                    for chunk in g.data.chunks(g.cols) {
                        for (x, y) in gr.data.iter_mut().zip(chunk) {
                            *x += y;
                        }
                    }
                    acc(&mut grads, *row, gr);
                    acc(&mut grads, *a, g);
                }
                Op::Scale(a, s) => {
                    let mut g = g;
                    g.scale_assign(*s);
                    acc(&mut grads, *a, g);
                }
                Op::MulConst(a, m) => {
                    let mut g = g;
                    for (x, y) in g.data.iter_mut().zip(&m.data) {
                        *x *= y;
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Relu(a) => {
                    let mut g = g;
                    for (x, y) in g.data.iter_mut().zip(&out.expect("value").data) {
                        if *y <= 0.0 {
                            *x = 0.0;
                        }
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Tanh(a) => {
                    let mut g = g;
                    for (x, y) in g.data.iter_mut().zip(&out.expect("value").data) {
                        *x *= 1.0 - y * y;
                    }
                    acc(&mut grads, *a, g);
                }
                Op::Softmax(a) => {
                    let y = out.expect("value");
                    let cols = y.cols;
                    let mut ga = Mat::zeros(y.rows, cols);
                    for r in 0..y.rows {
                        let (yr, gr) = (y.row(r), g.row(r));
                        let dot: f64 = yr.iter().zip(gr).map(|(p, q)| p * q).sum();
                        for c in 0..cols {
                            ga.data[r * cols + c] = yr[c] * (gr[c] - dot);
                        }
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    bias,
                    xhat,
                    inv_std,
                } => {
                    let gv = self.value(*gain);
                    let (rows, cols) = xhat.shape();
                    let mut ggain = Mat::zeros(1, cols);
                    let mut gbias = Mat::zeros(1, cols);
                    let mut gx = Mat::zeros(rows, cols);
                    let n = cols as f64;
                    for r in 0..rows {
                        let (xr, gr) = (xhat.row(r), g.row(r));
                        let mut sum_d = 0.0;
                        let mut sum_dx = 0.0;
                        for c in 0..cols {
                            ggain.data[c] += gr[c] * xr[c];
                            gbias.data[c] += gr[c];
                            let d = gr[c] * gv.data[c];
                            sum_d += d;
                            sum_dx += d * xr[c];
                        }
                        for c in 0..cols {
                            let d = gr[c] * gv.data[c];
                            gx.data[r * cols + c] = inv_std[r] / n * (n * d - sum_d - xr[c] * sum_dx);
                        }
                    }
                    acc(&mut grads, *gain, ggain);
                    acc(&mut grads, *bias, gbias);
                    acc(&mut grads, *x, gx);
                }
                Op::ConcatCols(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        let mut gp = Mat::zeros(rows, cols);
                        for r in 0..rows {
                            gp.row_mut(r).copy_from_slice(&g.row(r)[off..off + cols]);
                        }
                        off += cols;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::ConcatRows(parts) => {
                    let mut off = 0;
                    for &p in parts {
                        let (rows, cols) = self.shape(p);
                        let gp = Mat::from_vec(rows, cols, g.data[off..off + rows * cols].to_vec());
                        off += rows * cols;
                        acc(&mut grads, p, gp);
                    }
                }
                Op::SliceCols(a, start) => {
                    let (rows, cols) = self.shape(*a);
                    let mut ga = Mat::zeros(rows, cols);
                    for r in 0..rows {
                        ga.row_mut(r)[*start..*start + g.cols].copy_from_slice(g.row(r));
                    }
                    acc(&mut grads, *a, ga);
                }
                Op::Scatter { x, pairs, scale } => {
                    let (rows, cols) = self.shape(*x);
                    let mut gx = Mat::zeros(rows, cols);
                    for &(s, d) in pairs {
                        let src = &g.data[d * cols..(d + 1) * cols];
                        for (o, y) in gx.data[s * cols..(s + 1) * cols].iter_mut().zip(src) {
                            *o += scale * y;
                        }
                    }
                    acc(&mut grads, *x, gx);
                }
                Op::Pointer { a, b, v, th } => {
                    let (va, vb, vv) = (self.value(*a), self.value(*b), self.value(*v));
                    let d = va.cols;
                    let (t_n, c_n) = (va.rows, vb.rows);
                    let mut ga = Mat::zeros(t_n, d);
                    let mut gb = Mat::zeros(c_n, d);
                    let mut gv = Mat::zeros(1, d);
                    for t in 0..t_n {
                        for c in 0..c_n {
                            let go = g.data[t * c_n + c];
                            if go == 0.0 {
                                continue;
                            }
                            let base = (t * c_n + c) * d;
                            for k in 0..d {
                                let h = th[base + k];
                                gv.data[k] += go * h;
                                let dpre = go * vv.data[k] * (1.0 - h * h);
                                ga.data[t * d + k] += dpre;
                                gb.data[c * d + k] += dpre;
                            }
                        }
                    }
                    acc(&mut grads, *a, ga);
                    acc(&mut grads, *b, gb);
                    acc(&mut grads, *v, gv);
                }
                Op::Bce { p, targets, weights } => {
                    let vp = self.value(*p);
                    let scale = g.data[0];
                    let mut gp = Mat::zeros(vp.rows, vp.cols);
                    for r in 0..vp.rows {
                        if weights[r] == 0.0 {
                            continue;
                        }
                        for c in 0..vp.cols {
                            let x = vp.data[r * vp.cols + c];
                            if !(PROB_CLAMP..=1.0 - PROB_CLAMP).contains(&x) {
                                continue;
                            }
                            let d = if c == targets[r] { -1.0 / x } else { 1.0 / (1.0 - x) };
                            gp.data[r * vp.cols + c] = scale * weights[r] * d;
                        }
                    }
                    acc(&mut grads, *p, gp);
                }
                Op::Sum(a) => {
                    let (rows, cols) = self.shape(*a);
                    acc(&mut grads, *a, Mat::filled(rows, cols, g.data[0]));
                }
            }
        }
        grads
    }
}
