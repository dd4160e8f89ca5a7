//! SDM-Mesh JSON v1 reader and canonical writer.
//!
//! ```text
//! {"model_id": "...",
//!  "faces": [{"id": 1,
//!             "triangles": [{"v": [[x,y,z],[x,y,z],[x,y,z]], "nbr": [i,j,k]}],
//!             "loops": [[[x,y,z], ...]],
//!             "neighbor_faces": [2, 3]}],
//!  "labels": [{"type": "rect_pocket", "face_ids": [7, 8]}]}
//! ```
//!
//! `nbr`, `neighbor_faces` and `labels` may be omitted on input; missing
//! adjacency is derived from coordinates. The writer always emits every field
//! and formats floats with 17 significant digits, so save/load is exact.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::Path;

use serde::Deserialize;

use super::{
    compute_adjacency, compute_triangle_neighbors, FaceRecord, FeatureLabel, LoopPolygon, MeshModel, Triangle, Vec3,
};
use crate::error::{Error, Result};

#[derive(Deserialize)]
struct WireModel {
    model_id: String,
    faces: Vec<WireFace>,
    #[serde(default)]
    labels: Vec<WireLabel>,
}

#[derive(Deserialize)]
struct WireFace {
    id: usize,
    triangles: Vec<WireTriangle>,
    loops: Vec<Vec<[f64; 3]>>,
    #[serde(default)]
    neighbor_faces: Option<Vec<usize>>,
}

#[derive(Deserialize)]
struct WireTriangle {
    v: [[f64; 3]; 3],
    #[serde(default)]
    nbr: Option<[usize; 3]>,
}

#[derive(Deserialize)]
struct WireLabel {
    #[serde(rename = "type")]
    feature_type: String,
    face_ids: Vec<usize>,
}

/// Parses and validates an SDM-Mesh JSON v1 document.
pub fn model_from_json(text: &str) -> Result<MeshModel> {
    let wire: WireModel = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let mut needs_adjacency = false;
    let mut faces = Vec::with_capacity(wire.faces.len());
    for wf in wire.faces {
        let mut missing_nbr = false;
        let triangles = wf
            .triangles
            .iter()
            .enumerate()
            .map(|(ti, t)| {
                missing_nbr |= t.nbr.is_none();
                Triangle {
                    vertices: t.v.map(Vec3::from_array),
                    neighbors: t.nbr.unwrap_or([ti; 3]),
                }
            })
            .collect();
        needs_adjacency |= wf.neighbor_faces.is_none();
        let mut face = FaceRecord {
            id: wf.id,
            triangles,
            loops: wf
                .loops
                .into_iter()
                .map(|l| LoopPolygon {
                    vertices: l.into_iter().map(Vec3::from_array).collect(),
                })
                .collect(),
            neighbor_face_ids: wf.neighbor_faces.unwrap_or_default().into_iter().collect(),
        };
        if missing_nbr {
            compute_triangle_neighbors(&mut face);
        }
        faces.push(face);
    }
    faces.sort_by_key(|f| f.id);
    let mut model = MeshModel {
        model_id: wire.model_id,
        faces,
        labels: wire
            .labels
            .into_iter()
            .map(|l| FeatureLabel {
                feature_type: l.feature_type,
                face_ids: l.face_ids.into_iter().collect::<BTreeSet<_>>(),
            })
            .collect(),
    };
    if needs_adjacency && contiguous(&model) {
        model = compute_adjacency(&model);
    }
    model.validate()?;
    Ok(model)
}

fn contiguous(model: &MeshModel) -> bool {
    model.faces.iter().enumerate().all(|(i, f)| f.id == i + 1)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<MeshModel> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    model_from_json(&text)
}

pub fn save_model(model: &MeshModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, model_to_json(model)).map_err(|e| Error::io(path, e))
}

fn push_float(out: &mut String, x: f64) {
    // 17 significant digits: one before the point, sixteen after.
    let _ = write!(out, "{x:.16e}");
}

fn push_point(out: &mut String, p: Vec3) {
    out.push('[');
    push_float(out, p.x);
    out.push(',');
    push_float(out, p.y);
    out.push(',');
    push_float(out, p.z);
    out.push(']');
}

fn push_list<T>(out: &mut String, items: impl IntoIterator<Item = T>, mut f: impl FnMut(&mut String, T)) {
    out.push('[');
    for (i, item) in items.into_iter().enumerate() {
        if i > 0 {
            out.push(',');
        }
        f(out, item);
    }
    out.push(']');
}

/// Canonical serialization; identical models produce identical bytes.
pub fn model_to_json(model: &MeshModel) -> String {
    let mut out = String::with_capacity(256 * model.triangle_count() + 64);
    out.push_str("{\"model_id\":");
    out.push_str(&serde_json::to_string(&model.model_id).expect("string serializes"));
    out.push_str(",\"faces\":");
    push_list(&mut out, &model.faces, |out, face| {
        let _ = write!(out, "{{\"id\":{},\"triangles\":", face.id);
        push_list(out, &face.triangles, |out, tri| {
            out.push_str("{\"v\":");
            push_list(out, tri.vertices, push_point);
            let [a, b, c] = tri.neighbors;
            let _ = write!(out, ",\"nbr\":[{a},{b},{c}]}}");
        });
        out.push_str(",\"loops\":");
        push_list(out, &face.loops, |out, lp| {
            push_list(out, lp.vertices.iter().copied(), push_point)
        });
        out.push_str(",\"neighbor_faces\":");
        push_list(out, &face.neighbor_face_ids, |out, id| {
            let _ = write!(out, "{id}");
        });
        out.push('}');
    });
    out.push_str(",\"labels\":");
    push_list(&mut out, &model.labels, |out, label| {
        out.push_str("{\"type\":");
        out.push_str(&serde_json::to_string(&label.feature_type).expect("string serializes"));
        out.push_str(",\"face_ids\":");
        push_list(out, &label.face_ids, |out, id| {
            let _ = write!(out, "{id}");
        });
        out.push('}');
    });
    out.push_str("}\n");
    out
}
