//! Face encoder: per-triangle descriptors, loop and neighbor pooling, and a
//! transformer over the face set.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::MeshModel;
use crate::nn::layers::{Attention, FeedForward, Linear, Norm};
use crate::nn::{Graph, Mat, ParamStore, Var};
use crate::tokenizer::{tokenize_model, FaceTokenArray};

/// Width of the fixed per-block perceptrons inside the triangle descriptor.
pub const BLOCK_WIDTH: usize = 64;
pub const TEXT_DIM: usize = 256;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub d_model: usize,
    pub encoder_layers: usize,
    pub heads: usize,
    pub feed_forward_dim: usize,
    pub dropout: f64,
    pub text_dim: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self {
            d_model: 256,
            encoder_layers: 3,
            heads: 4,
            feed_forward_dim: 512,
            dropout: 0.1,
            text_dim: TEXT_DIM,
        }
    }
}

impl EncoderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d_model == 0 || self.heads == 0 || self.d_model % self.heads != 0 {
            return Err(Error::InvalidArgument(format!(
                "d_model {} must be a positive multiple of heads {}",
                self.d_model, self.heads
            )));
        }
        if self.text_dim != TEXT_DIM {
            return Err(Error::InvalidArgument(format!("text_dim must be {TEXT_DIM}")));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidArgument("dropout must lie in [0, 1)".into()));
        }
        Ok(())
    }
}

/// Flattened, index-resolved view of a model's tokens, ready for batched
/// evaluation. Building it once per model keeps training epochs cheap.
#[derive(Debug, Clone)]
pub struct EncoderInput {
    pub faces: usize,
    pub tri_loc: Mat,
    pub tri_normal: Mat,
    /// Corner offsets stacked as `[D1 of all triangles; D2 ...; D3 ...]`.
    pub tri_corners: Mat,
    pub tri_count: usize,
    /// `(neighbor triangle, triangle)` pairs, three per triangle.
    pub tri_neighbors: Vec<(usize, usize)>,
    pub tri_face: Vec<(usize, usize)>,
    pub poly_rows: Mat,
    pub row_face: Vec<(usize, usize)>,
    /// `(neighbor face, face)` pairs over 0-based face rows.
    pub face_neighbors: Vec<(usize, usize)>,
}

impl EncoderInput {
    pub fn from_tokens(tokens: &[FaceTokenArray], adjacency: &[Vec<usize>]) -> Result<Self> {
        if tokens.is_empty() {
            return Err(Error::InvalidArgument("model has no faces".into()));
        }
        let mut loc = Vec::new();
        let mut nrm = Vec::new();
        let mut corners = [Vec::new(), Vec::new(), Vec::new()];
        let mut tri_neighbors = Vec::new();
        let mut tri_face = Vec::new();
        let mut rows = Vec::new();
        let mut row_face = Vec::new();
        let mut offset = 0;
        for (f, face) in tokens.iter().enumerate() {
            if face.triangle_tokens.is_empty() {
                return Err(Error::InvalidArgument(format!(
                    "face {} has no triangles",
                    face.face_id
                )));
            }
            let n = face.triangle_tokens.len();
            for (i, t) in face.triangle_tokens.iter().enumerate() {
                loc.extend_from_slice(&t.location);
                nrm.extend_from_slice(&t.normal());
                for (k, c) in corners.iter_mut().enumerate() {
                    c.extend_from_slice(&t.corner(k));
                }
                for ni in t.neighbor_indices() {
                    if ni >= n {
                        return Err(Error::Shape(format!(
                            "face {} triangle {i}: neighbor index {ni} out of range",
                            face.face_id
                        )));
                    }
                    tri_neighbors.push((offset + ni, offset + i));
                }
                tri_face.push((offset + i, f));
            }
            offset += n;
            for p in &face.polygon_tokens {
                for r in &p.rows {
                    rows.extend_from_slice(r);
                    row_face.push((row_face.len(), f));
                }
            }
        }
        let tri_count = offset;
        let mut stacked = Vec::with_capacity(tri_count * 9);
        for c in &corners {
            stacked.extend_from_slice(c);
        }
        let face_neighbors = adjacency
            .iter()
            .enumerate()
            .flat_map(|(f, ns)| ns.iter().map(move |&n| (n, f)))
            .collect();
        Ok(Self {
            faces: tokens.len(),
            tri_loc: Mat::from_vec(tri_count, 3, loc),
            tri_normal: Mat::from_vec(tri_count, 3, nrm),
            tri_corners: Mat::from_vec(3 * tri_count, 3, stacked),
            tri_count,
            tri_neighbors,
            tri_face,
            poly_rows: Mat::from_vec(row_face.len(), 6, rows),
            row_face,
            face_neighbors,
        })
    }

    /// Tokenizes a (normalized) model.
    pub fn from_model(model: &MeshModel) -> Result<Self> {
        let tokens = tokenize_model(model)?;
        let adjacency: Vec<Vec<usize>> = model
            .faces
            .iter()
            .map(|f| f.neighbor_face_ids.iter().map(|&id| id - 1).collect())
            .collect();
        Self::from_tokens(&tokens, &adjacency)
    }
}

#[derive(Debug, Clone, Copy)]
struct EncoderLayer {
    norm1: Norm,
    attn: Attention,
    norm2: Norm,
    ffn: FeedForward,
}

/// Parameter handles for the encoder; the weights live in a [`ParamStore`].
#[derive(Debug, Clone)]
pub struct Encoder {
    pub config: EncoderConfig,
    pub loc1: Linear,
    pub loc2: Linear,
    pub normal: Linear,
    pub corner: Linear,
    pub mix: Linear,
    pub shape: Linear,
    pub poly1: Linear,
    pub poly2: Linear,
    pub loop_proj: Linear,
    pub neighbor_proj: Linear,
    layers: Vec<EncoderLayer>,
}

impl Encoder {
    pub fn new(store: &mut ParamStore, config: EncoderConfig, rng: &mut impl Rng) -> Self {
        let d = config.d_model;
        let b = BLOCK_WIDTH;
        let layers = (0..config.encoder_layers)
            .map(|i| EncoderLayer {
                norm1: Norm::new(store, &format!("enc.{i}.norm1"), d),
                attn: Attention::new(store, &format!("enc.{i}.attn"), d, d, config.heads, true, rng),
                norm2: Norm::new(store, &format!("enc.{i}.norm2"), d),
                ffn: FeedForward::new(store, &format!("enc.{i}.ffn"), d, config.feed_forward_dim, rng),
            })
            .collect();
        Self {
            config,
            loc1: Linear::new(store, "enc.loc1", 3, b, rng),
            loc2: Linear::new(store, "enc.loc2", b, d, rng),
            normal: Linear::new(store, "enc.normal", 3, b, rng),
            corner: Linear::new(store, "enc.corner", 3, b, rng),
            mix: Linear::new(store, "enc.mix", 2 * b, b, rng),
            shape: Linear::new(store, "enc.shape", 2 * b, d, rng),
            poly1: Linear::new(store, "enc.poly1", 6, b, rng),
            poly2: Linear::new(store, "enc.poly2", b, d, rng),
            loop_proj: Linear::no_bias(store, "enc.loop_proj", d, d, rng),
            neighbor_proj: Linear::no_bias(store, "enc.neighbor_proj", d, d, rng),
            layers,
        }
    }

    /// Per-triangle descriptors (T x d).
    fn triangle_descriptors(&self, g: &mut Graph, input: &EncoderInput) -> Var {
        let t = input.tri_count;
        let loc = g.input(input.tri_loc.clone());
        let h = self.loc1.forward(g, loc);
        let h = g.relu(h);
        let spatial = self.loc2.forward(g, h);

        let nrm = g.input(input.tri_normal.clone());
        let nrm = self.normal.forward(g, nrm);
        let nrm = g.relu(nrm);

        let corners = g.input(input.tri_corners.clone());
        let c = self.corner.forward(g, corners);
        let c = g.relu(c);
        let pairs = (0..3 * t).map(|r| (r, r % t)).collect();
        let own = g.scatter(c, pairs, t, 1.0 / 3.0);
        let nbr = g.scatter(own, input.tri_neighbors.clone(), t, 1.0 / 3.0);
        let cat = g.concat_cols(&[own, nbr]);
        let mixed = self.mix.forward(g, cat);
        let mixed = g.relu(mixed);

        let structural = g.concat_cols(&[nrm, mixed]);
        let structural = self.shape.forward(g, structural);
        g.add(spatial, structural)
    }

    /// Sum-pooled triangle descriptors and polygon-row descriptors per face,
    /// before any hierarchy aggregation: `(faces x d, faces x d)`.
    pub fn face_features(&self, g: &mut Graph, input: &EncoderInput) -> (Var, Var) {
        let tri = self.triangle_descriptors(g, input);
        let faces = g.scatter(tri, input.tri_face.clone(), input.faces, 1.0);
        let rows = g.input(input.poly_rows.clone());
        let h = self.poly1.forward(g, rows);
        let h = g.relu(h);
        let h = self.poly2.forward(g, h);
        let loops = g.scatter(h, input.row_face.clone(), input.faces, 1.0);
        (faces, loops)
    }

    /// `face += W_loop * loops`, then `face += W_nbr * sum(neighbor faces)`.
    pub fn aggregate(&self, g: &mut Graph, faces: Var, loops: Var, input: &EncoderInput) -> Var {
        let lp = self.loop_proj.forward(g, loops);
        let with_loops = g.add(faces, lp);
        let nsum = g.scatter(with_loops, input.face_neighbors.clone(), input.faces, 1.0);
        let np = self.neighbor_proj.forward(g, nsum);
        g.add(with_loops, np)
    }

    /// Pre-norm transformer encoder over the face set, no positional encoding.
    pub fn transform(&self, g: &mut Graph, mut x: Var) -> Var {
        let p = self.config.dropout;
        for layer in &self.layers {
            let h = layer.norm1.forward(g, x);
            let h = layer.attn.forward(g, h, h, None);
            let h = g.dropout(h, p);
            x = g.add(x, h);
            let h = layer.norm2.forward(g, x);
            let h = layer.ffn.forward(g, h, p);
            let h = g.dropout(h, p);
            x = g.add(x, h);
        }
        x
    }

    /// E_F: one row per face.
    pub fn encode(&self, g: &mut Graph, input: &EncoderInput) -> Var {
        let (faces, loops) = self.face_features(g, input);
        let agg = self.aggregate(g, faces, loops, input);
        self.transform(g, agg)
    }

    /// Pre-aggregation face vector for one face's tokens.
    pub fn extract_face_features(&self, store: &ParamStore, tokens: &FaceTokenArray) -> Result<Vec<f64>> {
        let input = EncoderInput::from_tokens(std::slice::from_ref(tokens), &[vec![]])?;
        let mut g = Graph::new(store);
        let (faces, _) = self.face_features(&mut g, &input);
        Ok(g.value(faces).data.clone())
    }
}
