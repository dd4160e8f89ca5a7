//! Text-conditioned pointer decoder over a model's faces.
//!
//! Candidate index 0 is end-of-sequence; candidate `j >= 1` is face id `j`
//! (row `j - 1` of E_F).

use std::collections::BTreeSet;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::encoder::EncoderConfig;
use crate::error::{Error, Result};
use crate::nn::layers::{Attention, FeedForward, Linear, Norm};
use crate::nn::{Graph, Mat, ParamId, ParamStore, Var};

pub const EOS: usize = 0;

#[derive(Debug, Clone, Copy)]
struct DecoderLayer {
    norm1: Norm,
    self_attn: Attention,
    norm2: Norm,
    cross_attn: Attention,
    norm3: Norm,
    ffn: FeedForward,
}

#[derive(Debug, Clone)]
pub struct Generator {
    pub fusion: Attention,
    pub memory_norm: Norm,
    layers: Vec<DecoderLayer>,
    pub final_norm: Norm,
    pub w1: Linear,
    pub w2: Linear,
    pub w3: Linear,
    pub v: ParamId,
    pub eos: ParamId,
    dropout: f64,
}

/// Row-major causal mask: position `i` may attend to `j <= i`.
pub fn causal_mask(t: usize) -> Vec<bool> {
    (0..t * t).map(|k| k % t <= k / t).collect()
}

impl Generator {
    pub fn new(store: &mut ParamStore, cfg: &EncoderConfig, decoder_layers: usize, rng: &mut impl Rng) -> Self {
        let d = cfg.d_model;
        let layers = (0..decoder_layers)
            .map(|i| DecoderLayer {
                norm1: Norm::new(store, &format!("dec.{i}.norm1"), d),
                self_attn: Attention::new(store, &format!("dec.{i}.self"), d, d, cfg.heads, true, rng),
                norm2: Norm::new(store, &format!("dec.{i}.norm2"), d),
                cross_attn: Attention::new(store, &format!("dec.{i}.cross"), d, d, cfg.heads, true, rng),
                norm3: Norm::new(store, &format!("dec.{i}.norm3"), d),
                ffn: FeedForward::new(store, &format!("dec.{i}.ffn"), d, cfg.feed_forward_dim, rng),
            })
            .collect();
        let lim = (3.0 / d as f64).sqrt();
        Self {
            fusion: Attention::unbiased(store, "fusion", cfg.text_dim, d, cfg.heads, rng),
            memory_norm: Norm::new(store, "memory_norm", d),
            layers,
            final_norm: Norm::new(store, "dec.final_norm", d),
            w1: Linear::no_bias(store, "pointer.w1", d, d, rng),
            w2: Linear::no_bias(store, "pointer.w2", d, d, rng),
            w3: Linear::no_bias(store, "pointer.w3", d, d, rng),
            v: store.add("pointer.v", Mat::uniform(1, d, lim, rng)),
            eos: store.add("pointer.eos", Mat::uniform(1, d, 1.0, rng)),
            dropout: cfg.dropout,
        }
    }

    /// Layer-normalized face embeddings used as decoder memory and candidates.
    pub fn memory(&self, g: &mut Graph, ef: Var) -> Var {
        self.memory_norm.forward(g, ef)
    }

    /// `softmax((E_S W_Q)(E_F W_K)^T / sqrt(D_k)) (E_F W_V)`, multi-head.
    pub fn fuse(&self, g: &mut Graph, es: Var, ef: Var) -> Var {
        self.fusion.forward(g, es, ef, None)
    }

    /// Decoder hidden states for the candidate-index sequence `inputs`
    /// (each `>= 1`), one row per position.
    pub fn decode(&self, g: &mut Graph, memory: Var, fusion: Var, inputs: &[usize]) -> Var {
        let rows: Vec<usize> = inputs.iter().map(|&j| j - 1).collect();
        let x = g.gather_rows(memory, &rows);
        let mut x = g.add_row(x, fusion);
        let mask = causal_mask(inputs.len());
        let p = self.dropout;
        for layer in &self.layers {
            let h = layer.norm1.forward(g, x);
            let h = layer.self_attn.forward(g, h, h, Some(&mask));
            let h = g.dropout(h, p);
            x = g.add(x, h);
            let h = layer.norm2.forward(g, x);
            let h = layer.cross_attn.forward(g, h, memory, None);
            let h = g.dropout(h, p);
            x = g.add(x, h);
            let h = layer.norm3.forward(g, x);
            let h = layer.ffn.forward(g, h, p);
            let h = g.dropout(h, p);
            x = g.add(x, h);
        }
        self.final_norm.forward(g, x)
    }

    /// `[eos; memory]`: (N + 1) x d.
    pub fn candidates(&self, g: &mut Graph, memory: Var) -> Var {
        let eos = g.param(self.eos);
        g.concat_rows(&[eos, memory])
    }

    /// `score[t][j] = v . tanh(W1 fusion + W2 h_t + W3 c_j)`.
    pub fn pointer_logits(&self, g: &mut Graph, fusion: Var, h: Var, candidates: Var) -> Var {
        let f = self.w1.forward(g, fusion);
        let a = self.w2.forward(g, h);
        let a = g.add_row(a, f);
        let b = self.w3.forward(g, candidates);
        let v = g.param(self.v);
        g.pointer_scores(a, b, v)
    }

    /// Teacher-forced distributions for `tokens = [SOS, y_1, ..., y_k, EOS]`:
    /// row `t` predicts `tokens[t + 1]` with every token up to `t` masked.
    pub fn teacher_forced(&self, g: &mut Graph, memory: Var, fusion: Var, tokens: &[usize]) -> Var {
        let inputs = &tokens[..tokens.len() - 1];
        let h = self.decode(g, memory, fusion, inputs);
        let cands = self.candidates(g, memory);
        let logits = self.pointer_logits(g, fusion, h, cands);
        let n1 = g.shape(cands).0;
        let mut allowed = vec![true; inputs.len() * n1];
        for t in 0..inputs.len() {
            for &j in &inputs[..=t] {
                allowed[t * n1 + j] = false;
            }
        }
        g.softmax(logits, Some(&allowed))
    }

    /// Distribution over the N + 1 candidates for the next token.
    pub fn step_distribution(&self, g: &mut Graph, memory: Var, fusion: Var, state: &DecoderState) -> Vec<f64> {
        let h = self.decode(g, memory, fusion, &state.generated_ids);
        let t = state.generated_ids.len();
        let last = g.gather_rows(h, &[t - 1]);
        let cands = self.candidates(g, memory);
        let logits = self.pointer_logits(g, fusion, last, cands);
        let p = g.softmax(logits, Some(&state.mask));
        g.value(p).data.clone()
    }

    /// Greedy decoding from `seed` (a face id) given raw E_S (1 x text_dim)
    /// and raw E_F (N x d).
    pub fn generate(&self, store: &ParamStore, es: &Mat, ef: &Mat, seed: usize) -> Result<GenerationResult> {
        let n = ef.rows;
        if seed == 0 || seed > n {
            return Err(Error::InvalidArgument(format!("seed face {seed} outside 1..={n}")));
        }
        let mut g = Graph::new(store);
        let (es, ef) = (g.input(es.clone()), g.input(ef.clone()));
        let memory = self.memory(&mut g, ef);
        let fusion = self.fuse(&mut g, es, memory);
        let mut state = DecoderState::new(n, seed);
        let mut raw = vec![seed];
        let mut dists = Vec::new();
        while state.step < n {
            let p = self.step_distribution(&mut g, memory, fusion, &state);
            let j = select_next(&p);
            dists.push(p);
            raw.push(j);
            if j == EOS {
                break;
            }
            state.push(j);
        }
        Ok(GenerationResult {
            face_ids: state.generated_ids.iter().copied().collect(),
            raw_sequence: raw,
            per_step_distributions: dists,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DecoderState {
    pub generated_ids: Vec<usize>,
    /// `mask[j]` is true while candidate `j` is selectable; index 0 is EOS.
    pub mask: Vec<bool>,
    pub step: usize,
}

impl DecoderState {
    pub fn new(n: usize, seed: usize) -> Self {
        let mut mask = vec![true; n + 1];
        mask[seed] = false;
        Self {
            generated_ids: vec![seed],
            mask,
            step: 0,
        }
    }

    pub fn push(&mut self, id: usize) {
        assert!(id != EOS && self.mask[id], "candidate {id} is not selectable");
        self.generated_ids.push(id);
        self.mask[id] = false;
        self.step += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationResult {
    pub face_ids: BTreeSet<usize>,
    pub raw_sequence: Vec<usize>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub per_step_distributions: Vec<Vec<f64>>,
}

/// Argmax with ties going to the lowest index.
pub fn select_next(distribution: &[f64]) -> usize {
    let mut best = 0;
    for (j, &p) in distribution.iter().enumerate() {
        if p > distribution[best] {
            best = j;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use super::*;
    use crate::encoder::TEXT_DIM;

    fn cfg(d: usize, heads: usize) -> EncoderConfig {
        EncoderConfig {
            d_model: d,
            encoder_layers: 1,
            heads,
            feed_forward_dim: 2 * d,
            dropout: 0.0,
            text_dim: TEXT_DIM,
        }
    }

    fn setup(seed: u64, d: usize) -> (ParamStore, Generator) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut store = ParamStore::default();
        let gen = Generator::new(&mut store, &cfg(d, 2), 2, &mut rng);
        (store, gen)
    }

    #[test]
    fn select_next_breaks_ties_low() {
        assert_eq!(select_next(&[0.1, 0.7, 0.2]), 1);
        assert_eq!(select_next(&[0.5, 0.5]), 0);
        assert_eq!(select_next(&[0.0, 0.0, 1.0]), 2);
    }

    #[test]
    fn single_face_fusion_is_value_projection() {
        let (store, gen) = setup(1, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let es = Mat::uniform(1, TEXT_DIM, 1.0, &mut rng);
        let ef = Mat::uniform(1, 8, 1.0, &mut rng);
        let mut g = Graph::new(&store);
        let (a, b) = (g.input(es), g.input(ef.clone()));
        let f = gen.fuse(&mut g, a, b);
        let expect = crate::nn::tensor::matmul(&ef, store.value(gen.fusion.v.w));
        assert!(g.value(f).max_abs_diff(&expect) < 1e-12);
    }

    #[test]
    fn duplicated_faces_leave_fusion_unchanged() {
        let (store, gen) = setup(2, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let es = Mat::uniform(1, TEXT_DIM, 1.0, &mut rng);
        let ef = Mat::uniform(3, 8, 1.0, &mut rng);
        let mut twice = ef.clone();
        twice.data.extend_from_slice(&ef.data);
        twice.rows = 6;
        let run = |m: &Mat| {
            let mut g = Graph::new(&store);
            let (a, b) = (g.input(es.clone()), g.input(m.clone()));
            let f = gen.fuse(&mut g, a, b);
            g.value(f).clone()
        };
        assert!(run(&ef).max_abs_diff(&run(&twice)) < 1e-12);
    }

    #[test]
    fn untrained_generation_terminates_without_duplicates() {
        let (store, gen) = setup(3, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 1..8 {
            let es = Mat::uniform(1, TEXT_DIM, 1.0, &mut rng);
            let ef = Mat::uniform(n, 8, 2.0, &mut rng);
            for seed in 1..=n {
                let r = gen.generate(&store, &es, &ef, seed).unwrap();
                assert!(r.raw_sequence.len() <= n + 1);
                let body: Vec<usize> = r.raw_sequence.iter().copied().filter(|&j| j != EOS).collect();
                let set: BTreeSet<usize> = body.iter().copied().collect();
                assert_eq!(set.len(), body.len());
                assert_eq!(set, r.face_ids);
                for p in &r.per_step_distributions {
                    assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-6);
                    assert!(p.iter().all(|&x| x >= 0.0));
                }
            }
        }
        assert!(gen
            .generate(&store, &Mat::zeros(1, TEXT_DIM), &Mat::zeros(2, 8), 0)
            .is_err());
        assert!(gen
            .generate(&store, &Mat::zeros(1, TEXT_DIM), &Mat::zeros(2, 8), 3)
            .is_err());
    }

    #[test]
    fn generated_faces_get_zero_probability() {
        let (store, gen) = setup(5, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let es = Mat::uniform(1, TEXT_DIM, 1.0, &mut rng);
        let ef = Mat::uniform(5, 8, 1.0, &mut rng);
        let mut g = Graph::new(&store);
        let (a, b) = (g.input(es), g.input(ef));
        let mem = gen.memory(&mut g, b);
        let fusion = gen.fuse(&mut g, a, mem);
        let mut state = DecoderState::new(5, 2);
        state.push(4);
        let p = gen.step_distribution(&mut g, mem, fusion, &state);
        assert_eq!(p[2], 0.0);
        assert_eq!(p[4], 0.0);
        assert!(p[0] > 0.0);
    }

    #[test]
    fn identical_candidates_score_equally() {
        let (store, gen) = setup(6, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let es = Mat::uniform(1, TEXT_DIM, 1.0, &mut rng);
        let mut ef = Mat::uniform(4, 8, 1.0, &mut rng);
        let row = ef.row(1).to_vec();
        ef.row_mut(2).copy_from_slice(&row);
        let mut g = Graph::new(&store);
        let (a, b) = (g.input(es), g.input(ef));
        let mem = gen.memory(&mut g, b);
        let fusion = gen.fuse(&mut g, a, mem);
        let p = gen.step_distribution(&mut g, mem, fusion, &DecoderState::new(4, 1));
        assert!((p[2] - p[3]).abs() < 1e-6);
    }

    #[test]
    fn teacher_forcing_matches_step_by_step() {
        let (store, gen) = setup(7, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let es = Mat::uniform(1, TEXT_DIM, 1.0, &mut rng);
        let ef = Mat::uniform(6, 8, 1.0, &mut rng);
        let tokens = [3, 1, 5, 6, EOS];
        let mut g = Graph::new(&store);
        let (a, b) = (g.input(es), g.input(ef));
        let mem = gen.memory(&mut g, b);
        let fusion = gen.fuse(&mut g, a, mem);
        let all = gen.teacher_forced(&mut g, mem, fusion, &tokens);
        let all = g.value(all).clone();
        let mut state = DecoderState::new(6, 3);
        for t in 0..tokens.len() - 1 {
            let p = gen.step_distribution(&mut g, mem, fusion, &state);
            for (j, pj) in p.iter().enumerate() {
                assert!((pj - all.get(t, j)).abs() < 1e-6);
            }
            if tokens[t + 1] != EOS {
                state.push(tokens[t + 1]);
            }
        }
    }

    #[test]
    fn causal_prefix_is_unaffected_by_later_tokens() {
        let (store, gen) = setup(8, 8);
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let es = Mat::uniform(1, TEXT_DIM, 1.0, &mut rng);
        let ef = Mat::uniform(6, 8, 1.0, &mut rng);
        let mut g = Graph::new(&store);
        let (a, b) = (g.input(es), g.input(ef));
        let mem = gen.memory(&mut g, b);
        let fusion = gen.fuse(&mut g, a, mem);
        let h1 = gen.decode(&mut g, mem, fusion, &[2, 4, 5]);
        let h2 = gen.decode(&mut g, mem, fusion, &[2, 4, 1]);
        let (h1, h2) = (g.value(h1), g.value(h2));
        for k in 0..2 * 8 {
            assert!((h1.data[k] - h2.data[k]).abs() < 1e-12);
        }
        assert!((h1.data[2 * 8] - h2.data[2 * 8]).abs() > 0.0);
    }
}
