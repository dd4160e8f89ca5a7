//! Mesh interchange model standing in for a tessellated B-rep.
//!
//! A [`MeshModel`] is a list of faces; each face owns its triangles and its
//! edge loops (as closed polygons). Vertices are stored by value, so faces
//! never share vertex storage and an edit on one face cannot disturb another.

mod adjacency;
mod io;
mod normalize;
pub mod region;
pub mod synthetic;

use std::collections::{BTreeSet, HashMap};
use std::ops::{Add, AddAssign, Div, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use adjacency::{compute_adjacency, compute_triangle_neighbors, VertexKey, VERTEX_TOLERANCE};
pub use io::{load_model, model_from_json, model_to_json, save_model};
pub use normalize::{bounding_box, normalize_model, Normalization};

/// Minimum triangle area accepted by validation.
pub const MIN_TRIANGLE_AREA: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn from_array(a: [f64; 3]) -> Self {
        Self::new(a[0], a[1], a[2])
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn dot(self, o: Vec3) -> f64 {
        self.x * o.x + self.y * o.y + self.z * o.z
    }

    pub fn cross(self, o: Vec3) -> Vec3 {
        Vec3::new(
            self.y * o.z - self.z * o.y,
            self.z * o.x - self.x * o.z,
            self.x * o.y - self.y * o.x,
        )
    }

    pub fn norm(self) -> f64 {
        self.dot(self).sqrt()
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    /// Component along axis 0, 1 or 2.
    pub fn axis(self, axis: usize) -> f64 {
        match axis {
            0 => self.x,
            1 => self.y,
            _ => self.z,
        }
    }

    pub fn with_axis(mut self, axis: usize, value: f64) -> Self {
        match axis {
            0 => self.x = value,
            1 => self.y = value,
            _ => self.z = value,
        }
        self
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x + o.x, self.y + o.y, self.z + o.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, o: Vec3) {
        *self = *self + o;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, o: Vec3) -> Vec3 {
        Vec3::new(self.x - o.x, self.y - o.y, self.z - o.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl Div<f64> for Vec3 {
    type Output = Vec3;
    fn div(self, s: f64) -> Vec3 {
        Vec3::new(self.x / s, self.y / s, self.z / s)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

/// A triangle of a face tessellation.
///
/// `neighbors` holds indices of edge-adjacent triangles within the same face;
/// slots without a neighbor hold the triangle's own index.
#[derive(Debug, Clone, PartialEq)]
pub struct Triangle {
    pub vertices: [Vec3; 3],
    pub neighbors: [usize; 3],
}

impl Triangle {
    pub fn new(vertices: [Vec3; 3], self_index: usize) -> Self {
        Self {
            vertices,
            neighbors: [self_index; 3],
        }
    }

    /// Unnormalized normal by the right-hand rule on (v2 - v1) x (v3 - v1).
    pub fn raw_normal(&self) -> Vec3 {
        let [a, b, c] = self.vertices;
        (b - a).cross(c - a)
    }

    pub fn area(&self) -> f64 {
        0.5 * self.raw_normal().norm()
    }

    pub fn centroid(&self) -> Vec3 {
        let [a, b, c] = self.vertices;
        (a + b + c) / 3.0
    }
}

/// Closed polygon for one edge loop; the last vertex connects to the first.
#[derive(Debug, Clone, PartialEq)]
pub struct LoopPolygon {
    pub vertices: Vec<Vec3>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FaceRecord {
    pub id: usize,
    pub triangles: Vec<Triangle>,
    pub loops: Vec<LoopPolygon>,
    pub neighbor_face_ids: BTreeSet<usize>,
}

impl FaceRecord {
    pub fn vertices(&self) -> impl Iterator<Item = Vec3> + '_ {
        self.triangles.iter().flat_map(|t| t.vertices.iter().copied())
    }

    pub fn area(&self) -> f64 {
        self.triangles.iter().map(Triangle::area).sum()
    }

    /// Area-weighted mean of the triangle normals, normalized.
    pub fn normal(&self) -> Vec3 {
        let n = self.triangles.iter().fold(Vec3::ZERO, |acc, t| acc + t.raw_normal());
        let len = n.norm();
        if len > 0.0 {
            n / len
        } else {
            n
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureLabel {
    pub feature_type: String,
    pub face_ids: BTreeSet<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MeshModel {
    pub model_id: String,
    pub faces: Vec<FaceRecord>,
    pub labels: Vec<FeatureLabel>,
}

impl MeshModel {
    pub fn face_count(&self) -> usize {
        self.faces.len()
    }

    pub fn face(&self, id: usize) -> Option<&FaceRecord> {
        id.checked_sub(1).and_then(|i| self.faces.get(i))
    }

    pub fn triangle_count(&self) -> usize {
        self.faces.iter().map(|f| f.triangles.len()).sum()
    }

    /// Checks every structural invariant of the interchange model.
    pub fn validate(&self) -> Result<()> {
        if self.faces.is_empty() {
            return Err(Error::Validation("model has no faces".into()));
        }
        for (i, face) in self.faces.iter().enumerate() {
            if face.id != i + 1 {
                return Err(Error::Validation(format!(
                    "non-contiguous face IDs: expected {} at position {}, found {}",
                    i + 1,
                    i,
                    face.id
                )));
            }
        }
        let n = self.faces.len();
        for face in &self.faces {
            self.validate_face(face)?;
            for &nb in &face.neighbor_face_ids {
                if nb == face.id {
                    return Err(Error::Validation(format!(
                        "face {} lists itself as a neighbor",
                        face.id
                    )));
                }
                if nb == 0 || nb > n {
                    return Err(Error::Validation(format!("face {} has unknown neighbor {nb}", face.id)));
                }
                if !self.faces[nb - 1].neighbor_face_ids.contains(&face.id) {
                    return Err(Error::Validation(format!(
                        "broken adjacency: {} lists {nb} but not vice versa",
                        face.id
                    )));
                }
            }
        }
        for label in &self.labels {
            if label.face_ids.is_empty() {
                return Err(Error::Validation(format!(
                    "label `{}` has no faces",
                    label.feature_type
                )));
            }
            if let Some(bad) = label.face_ids.iter().find(|&&id| id == 0 || id > n) {
                return Err(Error::Validation(format!(
                    "label `{}` references missing face {bad}",
                    label.feature_type
                )));
            }
        }
        self.check_manifold()
    }

    fn validate_face(&self, face: &FaceRecord) -> Result<()> {
        let id = face.id;
        if face.triangles.is_empty() {
            return Err(Error::Validation(format!("face {id} has no triangles")));
        }
        if face.loops.is_empty() {
            return Err(Error::Validation(format!("face {id} has no loops")));
        }
        let tri_count = face.triangles.len();
        for (ti, tri) in face.triangles.iter().enumerate() {
            if !tri.vertices.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!(
                    "face {id} triangle {ti} has non-finite coordinates"
                )));
            }
            if tri.area() <= MIN_TRIANGLE_AREA {
                return Err(Error::Validation(format!("face {id} triangle {ti} is degenerate")));
            }
            if tri.neighbors.iter().any(|&nb| nb >= tri_count) {
                return Err(Error::Validation(format!(
                    "face {id} triangle {ti} has out-of-range neighbor index"
                )));
            }
        }
        for (li, lp) in face.loops.iter().enumerate() {
            if lp.vertices.len() < 3 {
                return Err(Error::Validation(format!(
                    "face {id} loop {li} has fewer than 3 vertices"
                )));
            }
            if !lp.vertices.iter().all(|v| v.is_finite()) {
                return Err(Error::Validation(format!(
                    "face {id} loop {li} has non-finite coordinates"
                )));
            }
            let k = lp.vertices.len();
            for i in 0..k {
                if lp.vertices[i] == lp.vertices[(i + 1) % k] {
                    return Err(Error::Validation(format!("face {id} loop {li} repeats vertex {i}")));
                }
            }
        }
        Ok(())
    }

    /// Rejects meshes where a triangle edge is shared by more than two triangles.
    fn check_manifold(&self) -> Result<()> {
        let mut uses: HashMap<(VertexKey, VertexKey), u32> = HashMap::new();
        for face in &self.faces {
            for tri in &face.triangles {
                for (a, b) in triangle_edges(tri) {
                    let count = uses.entry(edge_key(a, b)).or_default();
                    *count += 1;
                    if *count > 2 {
                        return Err(Error::Validation(format!("non-manifold edge near face {}", face.id)));
                    }
                }
            }
        }
        Ok(())
    }

    /// Applies `f` to every stored vertex position (triangles and loops).
    pub fn map_vertices(&mut self, mut f: impl FnMut(Vec3) -> Vec3) {
        for face in &mut self.faces {
            map_face_vertices(face, &mut f);
        }
    }
}

pub(crate) fn map_face_vertices(face: &mut FaceRecord, f: &mut impl FnMut(Vec3) -> Vec3) {
    for tri in &mut face.triangles {
        for v in &mut tri.vertices {
            *v = f(*v);
        }
    }
    for lp in &mut face.loops {
        for v in &mut lp.vertices {
            *v = f(*v);
        }
    }
}

pub(crate) fn triangle_edges(tri: &Triangle) -> [(Vec3, Vec3); 3] {
    let [a, b, c] = tri.vertices;
    [(a, b), (b, c), (c, a)]
}

pub(crate) fn edge_key(a: Vec3, b: Vec3) -> (VertexKey, VertexKey) {
    let (ka, kb) = (VertexKey::of(a), VertexKey::of(b));
    if ka <= kb {
        (ka, kb)
    } else {
        (kb, ka)
    }
}

/// Small hand-built models used by tests and examples.
pub mod fixtures {
    use super::*;

    /// Axis-aligned box [lo, hi] as six two-triangle faces with outward CCW winding.
    pub fn box_model(lo: Vec3, hi: Vec3) -> MeshModel {
        let corner = |i: usize, j: usize, k: usize| {
            Vec3::new(
                if i == 0 { lo.x } else { hi.x },
                if j == 0 { lo.y } else { hi.y },
                if k == 0 { lo.z } else { hi.z },
            )
        };
        // Each quad listed counter-clockwise seen from outside.
        let quads = [
            [corner(0, 0, 0), corner(0, 1, 0), corner(1, 1, 0), corner(1, 0, 0)], // bottom
            [corner(0, 0, 1), corner(1, 0, 1), corner(1, 1, 1), corner(0, 1, 1)], // top
            [corner(0, 0, 0), corner(1, 0, 0), corner(1, 0, 1), corner(0, 0, 1)], // front
            [corner(0, 1, 0), corner(0, 1, 1), corner(1, 1, 1), corner(1, 1, 0)], // back
            [corner(0, 0, 0), corner(0, 0, 1), corner(0, 1, 1), corner(0, 1, 0)], // left
            [corner(1, 0, 0), corner(1, 1, 0), corner(1, 1, 1), corner(1, 0, 1)], // right
        ];
        let faces = quads
            .iter()
            .enumerate()
            .map(|(i, q)| FaceRecord {
                id: i + 1,
                triangles: vec![
                    Triangle::new([q[0], q[1], q[2]], 0),
                    Triangle::new([q[0], q[2], q[3]], 1),
                ],
                loops: vec![LoopPolygon { vertices: q.to_vec() }],
                neighbor_face_ids: BTreeSet::new(),
            })
            .collect();
        compute_adjacency(&MeshModel {
            model_id: "cube".into(),
            faces,
            labels: vec![],
        })
    }

    pub fn unit_cube() -> MeshModel {
        box_model(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0))
    }
}
