//! Face-wise geometric tokens.
//!
//! * segment `(v1, v2)` -> `[v1; v2 - v1]` (6 reals)
//! * polygon `v1..vn` -> one segment token per edge, closing edge included (n x 6)
//! * triangle -> location `C` (centroid, 3 reals) and shape
//!   `[N; D1; D2; D3; NI]` (15 reals): unit normal, corner offsets from the
//!   centroid, and the within-face indices of the three edge neighbors.
//!
//! Vertices get no tokens of their own; they are implied by the segments.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{LoopPolygon, MeshModel, Triangle, Vec3, MIN_TRIANGLE_AREA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SegmentToken(pub [f64; 6]);

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PolygonToken {
    pub rows: Vec<[f64; 6]>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TriangleToken {
    pub location: [f64; 3],
    pub shape: [f64; 15],
}

impl TriangleToken {
    pub fn normal(&self) -> [f64; 3] {
        [self.shape[0], self.shape[1], self.shape[2]]
    }

    pub fn corner(&self, i: usize) -> [f64; 3] {
        let o = 3 + 3 * i;
        [self.shape[o], self.shape[o + 1], self.shape[o + 2]]
    }

    pub fn neighbor_indices(&self) -> [usize; 3] {
        [
            self.shape[12] as usize,
            self.shape[13] as usize,
            self.shape[14] as usize,
        ]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FaceTokenArray {
    pub face_id: usize,
    pub triangle_tokens: Vec<TriangleToken>,
    pub polygon_tokens: Vec<PolygonToken>,
}

pub fn tokenize_segment(v1: Vec3, v2: Vec3) -> Result<SegmentToken> {
    if v1 == v2 {
        return Err(Error::Degenerate(format!("zero-length segment at {v1:?}")));
    }
    let d = v2 - v1;
    Ok(SegmentToken([v1.x, v1.y, v1.z, d.x, d.y, d.z]))
}

pub fn tokenize_polygon(p: &LoopPolygon) -> Result<PolygonToken> {
    let n = p.vertices.len();
    if n < 3 {
        return Err(Error::Degenerate(format!("loop with {n} vertices")));
    }
    let rows = (0..n)
        .map(|i| tokenize_segment(p.vertices[i], p.vertices[(i + 1) % n]).map(|s| s.0))
        .collect::<Result<_>>()?;
    Ok(PolygonToken { rows })
}

pub fn tokenize_triangle(t: &Triangle) -> Result<TriangleToken> {
    let raw = t.raw_normal();
    let len = raw.norm();
    if 0.5 * len <= MIN_TRIANGLE_AREA {
        return Err(Error::Degenerate("zero-area triangle".into()));
    }
    let n = raw / len;
    let c = t.centroid();
    let mut shape = [0.0; 15];
    shape[..3].copy_from_slice(&n.to_array());
    for (i, v) in t.vertices.iter().enumerate() {
        shape[3 + 3 * i..6 + 3 * i].copy_from_slice(&(*v - c).to_array());
    }
    for (i, &nb) in t.neighbors.iter().enumerate() {
        shape[12 + i] = nb as f64;
    }
    Ok(TriangleToken {
        location: c.to_array(),
        shape,
    })
}

/// One token array per face, in face-id order.
pub fn tokenize_model(model: &MeshModel) -> Result<Vec<FaceTokenArray>> {
    model
        .faces
        .iter()
        .map(|f| {
            Ok(FaceTokenArray {
                face_id: f.id,
                triangle_tokens: f.triangles.iter().map(tokenize_triangle).collect::<Result<_>>()?,
                polygon_tokens: f.loops.iter().map(tokenize_polygon).collect::<Result<_>>()?,
            })
        })
        .collect()
}

/// Debug dump: face-major, with triangle-location, triangle-shape and polygon sections per face.
pub fn tokens_to_json(model_id: &str, tokens: &[FaceTokenArray]) -> String {
    #[derive(Serialize)]
    struct Face<'a> {
        face_id: usize,
        triangle_location: Vec<[f64; 3]>,
        triangle_shape: Vec<&'a [f64]>,
        polygons: Vec<&'a [[f64; 6]]>,
    }
    #[derive(Serialize)]
    struct Dump<'a> {
        model_id: &'a str,
        faces: Vec<Face<'a>>,
    }
    let dump = Dump {
        model_id,
        faces: tokens
            .iter()
            .map(|f| Face {
                face_id: f.face_id,
                triangle_location: f.triangle_tokens.iter().map(|t| t.location).collect(),
                triangle_shape: f.triangle_tokens.iter().map(|t| &t.shape[..]).collect(),
                polygons: f.polygon_tokens.iter().map(|p| &p.rows[..]).collect(),
            })
            .collect(),
    };
    serde_json::to_string(&dump).expect("tokens serialize")
}
