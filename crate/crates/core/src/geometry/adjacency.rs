use std::collections::{BTreeSet, HashMap};

use super::{edge_key, triangle_edges, FaceRecord, MeshModel, Vec3};

/// Vertices closer than this (per coordinate) are treated as the same point.
pub const VERTEX_TOLERANCE: f64 = 1e-9;

/// Vertex position snapped to the tolerance grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct VertexKey([i64; 3]);

impl VertexKey {
    pub fn of(v: Vec3) -> Self {
        let q = |c: f64| (c / VERTEX_TOLERANCE).round() as i64;
        VertexKey([q(v.x), q(v.y), q(v.z)])
    }
}

/// Recomputes face adjacency (faces sharing a triangle edge) and the
/// within-face triangle neighbor indices.
pub fn compute_adjacency(model: &MeshModel) -> MeshModel {
    let mut edge_faces: HashMap<_, BTreeSet<usize>> = HashMap::new();
    for face in &model.faces {
        for tri in &face.triangles {
            for (a, b) in triangle_edges(tri) {
                edge_faces.entry(edge_key(a, b)).or_default().insert(face.id);
            }
        }
    }

    let mut out = model.clone();
    for face in &mut out.faces {
        face.neighbor_face_ids.clear();
        compute_triangle_neighbors(face);
    }
    for faces in edge_faces.values() {
        for &a in faces {
            for &b in faces {
                if a != b {
                    out.faces[a - 1].neighbor_face_ids.insert(b);
                }
            }
        }
    }
    out
}

/// Fills `Triangle::neighbors` with edge-adjacent triangles inside `face`,
/// using the triangle's own index where an edge has no partner.
pub fn compute_triangle_neighbors(face: &mut FaceRecord) {
    let mut edge_tris: HashMap<_, Vec<usize>> = HashMap::new();
    for (ti, tri) in face.triangles.iter().enumerate() {
        for (a, b) in triangle_edges(tri) {
            edge_tris.entry(edge_key(a, b)).or_default().push(ti);
        }
    }
    let neighbors: Vec<[usize; 3]> = face
        .triangles
        .iter()
        .enumerate()
        .map(|(ti, tri)| {
            let mut nbr = [ti; 3];
            for (slot, (a, b)) in triangle_edges(tri).into_iter().enumerate() {
                if let Some(other) = edge_tris[&edge_key(a, b)].iter().find(|&&o| o != ti) {
                    nbr[slot] = *other;
                }
            }
            nbr
        })
        .collect();
    for (tri, nbr) in face.triangles.iter_mut().zip(neighbors) {
        tri.neighbors = nbr;
    }
}
