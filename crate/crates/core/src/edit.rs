//! Mesh-level direct edits on face sets.
//!
//! Faces own their vertices, so transforming a face never touches geometry of
//! any other face; the targeted faces simply detach where they used to meet
//! their neighbors. Face adjacency is kept as-is for rigid edits and resizes
//! (the feature is still topologically where it was) and rewritten on delete.
//!
//! Every edit is logged as [`ApiCall`] descriptors carrying fully resolved
//! arguments (pivots included), so replaying a log reproduces the result
//! bit for bit.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::geometry::{map_face_vertices, MeshModel, Vec3};
use crate::parser::schema::{validate_schema, Axis, Operation, Sign, StructuredCommand};

/// One operation bound to its target faces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EditOp {
    #[serde(flatten)]
    pub operation: Operation,
    pub face_ids: BTreeSet<usize>,
}

/// Neutral, replayable edit call.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "function", content = "arguments", rename_all = "snake_case")]
pub enum ApiCall {
    TranslateFaces {
        face_ids: BTreeSet<usize>,
        vector: [f64; 3],
    },
    RotateFaces {
        face_ids: BTreeSet<usize>,
        axis: Axis,
        angle_deg: f64,
        pivot: [f64; 3],
    },
    DeleteFaces {
        face_ids: BTreeSet<usize>,
    },
    ScaleFaces {
        face_ids: BTreeSet<usize>,
        factor: f64,
        center: [f64; 3],
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct EditResult {
    pub model: MeshModel,
    pub api_calls: Vec<ApiCall>,
    /// Faces of the result whose geometry changed (result numbering).
    pub changed_face_ids: BTreeSet<usize>,
    /// Faces of the input that no longer exist (input numbering).
    pub deleted_face_ids: BTreeSet<usize>,
    /// Input id to result id for every surviving face.
    pub remap: BTreeMap<usize, usize>,
}

fn check_targets(model: &MeshModel, ids: &BTreeSet<usize>) -> Result<()> {
    if ids.is_empty() {
        return Err(Error::InvalidArgument("edit targets no faces".into()));
    }
    let n = model.face_count();
    match ids.iter().find(|&&id| id == 0 || id > n) {
        Some(bad) => Err(Error::InvalidArgument(format!("face id {bad} outside 1..={n}"))),
        None => Ok(()),
    }
}

/// Area-weighted centroid of the targeted faces' surface.
pub fn face_set_centroid(model: &MeshModel, ids: &BTreeSet<usize>) -> Vec3 {
    let mut acc = Vec3::ZERO;
    let mut area = 0.0;
    for face in ids.iter().filter_map(|&id| model.face(id)) {
        for t in &face.triangles {
            let a = t.area();
            acc += t.centroid() * a;
            area += a;
        }
    }
    if area > 0.0 {
        acc / area
    } else {
        Vec3::ZERO
    }
}

fn rotate_point(p: Vec3, axis: Axis, angle_deg: f64, pivot: Vec3) -> Vec3 {
    let (s, c) = angle_deg.to_radians().sin_cos();
    let d = p - pivot;
    let r = match axis {
        Axis::X => Vec3::new(d.x, c * d.y - s * d.z, s * d.y + c * d.z),
        Axis::Y => Vec3::new(c * d.x + s * d.z, d.y, -s * d.x + c * d.z),
        Axis::Z => Vec3::new(c * d.x - s * d.y, s * d.x + c * d.y, d.z),
    };
    r + pivot
}

fn transform(model: &mut MeshModel, ids: &BTreeSet<usize>, mut f: impl FnMut(Vec3) -> Vec3) {
    for &id in ids {
        map_face_vertices(&mut model.faces[id - 1], &mut f);
    }
}

fn delete(model: &MeshModel, ids: &BTreeSet<usize>) -> Result<(MeshModel, BTreeMap<usize, usize>)> {
    if ids.len() >= model.face_count() {
        return Err(Error::Edit("deleting these faces would leave the model empty".into()));
    }
    let remap: BTreeMap<usize, usize> = model
        .faces
        .iter()
        .map(|f| f.id)
        .filter(|id| !ids.contains(id))
        .enumerate()
        .map(|(i, old)| (old, i + 1))
        .collect();
    let mut out = model.clone();
    out.faces.retain(|f| !ids.contains(&f.id));
    for f in &mut out.faces {
        f.id = remap[&f.id];
        f.neighbor_face_ids = f
            .neighbor_face_ids
            .iter()
            .filter_map(|n| remap.get(n).copied())
            .collect();
    }
    for l in &mut out.labels {
        l.face_ids = l.face_ids.iter().filter_map(|n| remap.get(n).copied()).collect();
    }
    out.labels.retain(|l| !l.face_ids.is_empty());
    Ok((out, remap))
}

/// Executes one resolved call. Returns the remap table for deletes.
fn execute(model: &mut MeshModel, call: &ApiCall) -> Result<Option<BTreeMap<usize, usize>>> {
    match call {
        ApiCall::TranslateFaces { face_ids, vector } => {
            check_targets(model, face_ids)?;
            let [dx, dy, dz] = *vector;
            // only add non-zero components so untouched coordinates keep their bits
            let add = |c: f64, d: f64| if d != 0.0 { c + d } else { c };
            transform(model, face_ids, |p| Vec3::new(add(p.x, dx), add(p.y, dy), add(p.z, dz)));
            Ok(None)
        }
        ApiCall::RotateFaces {
            face_ids,
            axis,
            angle_deg,
            pivot,
        } => {
            check_targets(model, face_ids)?;
            let pivot = Vec3::from_array(*pivot);
            transform(model, face_ids, |p| rotate_point(p, *axis, *angle_deg, pivot));
            Ok(None)
        }
        ApiCall::ScaleFaces {
            face_ids,
            factor,
            center,
        } => {
            check_targets(model, face_ids)?;
            if !(*factor > 0.0) {
                return Err(Error::Edit(format!("scale factor must be positive, got {factor}")));
            }
            let c = Vec3::from_array(*center);
            transform(model, face_ids, |p| c + (p - c) * *factor);
            Ok(None)
        }
        ApiCall::DeleteFaces { face_ids } => {
            check_targets(model, face_ids)?;
            let (out, remap) = delete(model, face_ids)?;
            *model = out;
            Ok(Some(remap))
        }
    }
}

fn resolve(model: &MeshModel, op: &Operation, ids: BTreeSet<usize>) -> ApiCall {
    match *op {
        Operation::Move {
            axis,
            sign,
            distance_mm,
        } => {
            let mut vector = [0.0; 3];
            vector[axis.index()] = sign.factor() * distance_mm;
            ApiCall::TranslateFaces { face_ids: ids, vector }
        }
        Operation::Rotate { axis, angle_deg } => ApiCall::RotateFaces {
            pivot: face_set_centroid(model, &ids).to_array(),
            face_ids: ids,
            axis,
            angle_deg,
        },
        Operation::Delete {} => ApiCall::DeleteFaces { face_ids: ids },
        Operation::Resize { factor } => ApiCall::ScaleFaces {
            center: face_set_centroid(model, &ids).to_array(),
            face_ids: ids,
            factor,
        },
    }
}

/// Applies `ops` in order. Face ids in every op refer to the input model;
/// they are carried through deletes performed by earlier ops. The input is
/// never modified, and the result is validated before it is returned.
pub fn apply_ops(model: &MeshModel, ops: &[EditOp]) -> Result<EditResult> {
    if ops.is_empty() {
        return Err(Error::InvalidArgument("no edit operations".into()));
    }
    for op in ops {
        check_targets(model, &op.face_ids)?;
    }
    let mut current = model.clone();
    // input id -> current id
    let mut remap: BTreeMap<usize, usize> = (1..=model.face_count()).map(|i| (i, i)).collect();
    let mut touched_input: BTreeSet<usize> = BTreeSet::new();
    let mut calls = Vec::with_capacity(ops.len());
    for (k, op) in ops.iter().enumerate() {
        let ids = op
            .face_ids
            .iter()
            .map(|id| {
                remap.get(id).copied().ok_or_else(|| {
                    Error::Edit(format!(
                        "operation {} targets face {id}, deleted by an earlier operation",
                        k + 1
                    ))
                })
            })
            .collect::<Result<BTreeSet<usize>>>()?;
        let call = resolve(&current, &op.operation, ids);
        if let Some(step) = execute(&mut current, &call)? {
            remap = remap
                .into_iter()
                .filter_map(|(input, cur)| step.get(&cur).map(|&new| (input, new)))
                .collect();
        } else {
            touched_input.extend(op.face_ids.iter().copied());
        }
        calls.push(call);
    }
    current
        .validate()
        .map_err(|e| Error::Edit(format!("edit produced an invalid model: {e}")))?;
    let changed_face_ids = touched_input.iter().filter_map(|id| remap.get(id).copied()).collect();
    let deleted_face_ids = (1..=model.face_count()).filter(|id| !remap.contains_key(id)).collect();
    Ok(EditResult {
        model: current,
        api_calls: calls,
        changed_face_ids,
        deleted_face_ids,
        remap,
    })
}

/// Replays a descriptor log on `model`.
pub fn replay_api_calls(model: &MeshModel, calls: &[ApiCall]) -> Result<MeshModel> {
    let mut current = model.clone();
    for call in calls {
        execute(&mut current, call)?;
    }
    Ok(current)
}

/// One [`EditOp`] per command entry, in order. `targets` holds either a single
/// face set shared by every entry or one set per entry.
pub fn compile_api_calls(command: &StructuredCommand, targets: &[BTreeSet<usize>]) -> Result<Vec<EditOp>> {
    let n = command.commands.len();
    if targets.len() != 1 && targets.len() != n {
        return Err(Error::InvalidArgument(format!(
            "{} face sets given for {n} commands (expected 1 or {n})",
            targets.len()
        )));
    }
    Ok(command
        .commands
        .iter()
        .enumerate()
        .map(|(i, c)| EditOp {
            operation: c.operation.clone(),
            face_ids: targets[if targets.len() == 1 { 0 } else { i }].clone(),
        })
        .collect())
}

/// Validates raw command JSON, then compiles it.
pub fn compile_value(command: &Value, targets: &[BTreeSet<usize>]) -> Result<Vec<EditOp>> {
    let c = validate_schema(command).map_err(|v| Error::Validation(v.join("; ")))?;
    compile_api_calls(&c, targets)
}

pub fn apply_move(
    model: &MeshModel,
    face_ids: &BTreeSet<usize>,
    axis: Axis,
    sign: Sign,
    distance_mm: f64,
) -> Result<EditResult> {
    single(
        model,
        face_ids,
        Operation::Move {
            axis,
            sign,
            distance_mm,
        },
    )
}

pub fn apply_rotate(model: &MeshModel, face_ids: &BTreeSet<usize>, axis: Axis, angle_deg: f64) -> Result<EditResult> {
    single(model, face_ids, Operation::Rotate { axis, angle_deg })
}

pub fn apply_delete(model: &MeshModel, face_ids: &BTreeSet<usize>) -> Result<EditResult> {
    single(model, face_ids, Operation::Delete {})
}

pub fn apply_resize(model: &MeshModel, face_ids: &BTreeSet<usize>, factor: f64) -> Result<EditResult> {
    single(model, face_ids, Operation::Resize { factor })
}

fn single(model: &MeshModel, face_ids: &BTreeSet<usize>, operation: Operation) -> Result<EditResult> {
    apply_ops(
        model,
        &[EditOp {
            operation,
            face_ids: face_ids.clone(),
        }],
    )
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;
    use serde_json::json;

    use super::*;
    use crate::geometry::fixtures::{box_model, unit_cube};
    use crate::geometry::synthetic::generate_dataset;
    use crate::geometry::{compute_adjacency, model_from_json, model_to_json};

    fn ids(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    fn slot_model() -> (MeshModel, BTreeSet<usize>) {
        let (models, _) = generate_dataset(8, 3).unwrap();
        let m = models
            .into_iter()
            .find(|m| m.labels.iter().any(|l| l.feature_type == "rect_through_slot"))
            .unwrap();
        let slot = m
            .labels
            .iter()
            .find(|l| l.feature_type == "rect_through_slot")
            .unwrap()
            .face_ids
            .clone();
        (m, slot)
    }

    #[test]
    fn move_translates_only_targets() {
        let (m, slot) = slot_model();
        let r = apply_move(&m, &slot, Axis::X, Sign::Plus, 3.0).unwrap();
        for (a, b) in m.faces.iter().zip(&r.model.faces) {
            if slot.contains(&a.id) {
                for (p, q) in a.vertices().zip(b.vertices()) {
                    assert_eq!(q, Vec3::new(p.x + 3.0, p.y, p.z));
                }
            } else {
                assert_eq!(a, b);
            }
        }
        assert_eq!(r.changed_face_ids, slot);
        let back = apply_move(&r.model, &slot, Axis::X, Sign::Minus, 3.0).unwrap();
        for (a, b) in m.faces.iter().zip(&back.model.faces) {
            for (p, q) in a.vertices().zip(b.vertices()) {
                assert!((p - q).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn full_turn_and_composition() {
        let (m, slot) = slot_model();
        let full = apply_rotate(&m, &slot, Axis::Z, 360.0).unwrap().model;
        let quarter = apply_rotate(&m, &slot, Axis::Z, 90.0).unwrap().model;
        let half_half = apply_rotate(
            &apply_rotate(&m, &slot, Axis::Z, 45.0).unwrap().model,
            &slot,
            Axis::Z,
            45.0,
        )
        .unwrap()
        .model;
        for ((a, b), (c, d)) in m
            .faces
            .iter()
            .zip(&full.faces)
            .zip(quarter.faces.iter().zip(&half_half.faces))
        {
            for (p, q) in a.vertices().zip(b.vertices()) {
                assert!((p - q).norm() < 1e-9);
            }
            for (p, q) in c.vertices().zip(d.vertices()) {
                assert!((p - q).norm() < 1e-9);
            }
        }
    }

    #[test]
    fn quarter_turn_rotates_normals() {
        let cube = unit_cube();
        let face = cube.faces.iter().find(|f| f.normal().x > 0.9).unwrap().id;
        let r = apply_rotate(&cube, &ids(&[face]), Axis::Z, 90.0).unwrap();
        let n = r.model.face(face).unwrap().normal();
        assert!((n - Vec3::new(0.0, 1.0, 0.0)).norm() < 1e-9, "{n:?}");
    }

    #[test]
    fn delete_reindexes_with_remap() {
        let (m, slot) = slot_model();
        let n = m.face_count();
        let r = apply_delete(&m, &slot).unwrap();
        assert_eq!(r.model.face_count(), n - slot.len());
        assert_eq!(r.remap.len(), n - slot.len());
        assert_eq!(r.deleted_face_ids, slot);
        r.model.validate().unwrap();
        for (old, new) in &r.remap {
            assert_eq!(m.face(*old).unwrap().triangles, r.model.face(*new).unwrap().triangles);
        }
        // symmetric adjacency, and consistent with a fresh recompute
        let fresh = compute_adjacency(&r.model);
        for (a, b) in r.model.faces.iter().zip(&fresh.faces) {
            assert_eq!(a.neighbor_face_ids, b.neighbor_face_ids);
        }
        assert!(apply_delete(&m, &(1..=n).collect()).is_err());
    }

    #[test]
    fn delete_three_of_nine() {
        let m = box_model(Vec3::ZERO, Vec3::new(1.0, 1.0, 1.0));
        let r = apply_delete(&m, &ids(&[1, 2, 3])).unwrap();
        assert_eq!(r.model.face_count(), m.face_count() - 3);
        assert!(apply_delete(&m, &ids(&[0])).is_err());
        assert!(apply_delete(&m, &ids(&[99])).is_err());
    }

    #[test]
    fn resize_about_centroid() {
        let cube = unit_cube();
        let all: BTreeSet<usize> = (1..=6).collect();
        let c = face_set_centroid(&cube, &all);
        let r = apply_resize(&cube, &all, 2.0).unwrap();
        for (a, b) in cube.faces.iter().zip(&r.model.faces) {
            for (p, q) in a.vertices().zip(b.vertices()) {
                assert!(((q - c) - (p - c) * 2.0).norm() < 1e-12);
            }
        }
    }

    #[test]
    fn compile_order_and_broadcast() {
        let cmd = validate_schema(&json!({"commands": [
            {"feature": {"type": "slot"}, "operation": {"type": "move", "parameters": {"axis": "X", "sign": "+", "distance_mm": 3}}},
            {"feature": {"type": "slot"}, "operation": {"type": "delete", "parameters": {}}}
        ]}))
        .unwrap();
        let ops = compile_api_calls(&cmd, &[ids(&[2, 3])]).unwrap();
        assert_eq!(ops.len(), 2);
        assert_eq!(ops[0].operation.name(), "move");
        assert_eq!(ops[1].operation, Operation::Delete {});
        assert_eq!(
            serde_json::to_value(&ops[1]).unwrap(),
            json!({"type": "delete", "parameters": {}, "face_ids": [2, 3]})
        );
        assert!(compile_api_calls(&cmd, &[ids(&[1]), ids(&[2]), ids(&[3])]).is_err());
        let err = compile_value(
            &json!({"commands": [{"feature": {"type": "slot"}, "operation": {"type": "chamfer", "parameters": {}}}]}),
            &[ids(&[1])],
        )
        .unwrap_err();
        assert!(err.to_string().contains("move, rotate, delete, resize"));
    }

    #[test]
    fn later_ops_follow_earlier_deletes() {
        let m = box_model(Vec3::ZERO, Vec3::new(2.0, 2.0, 2.0));
        let ops = vec![
            EditOp {
                operation: Operation::Delete {},
                face_ids: ids(&[1]),
            },
            EditOp {
                operation: Operation::Move {
                    axis: Axis::Z,
                    sign: Sign::Plus,
                    distance_mm: 1.0,
                },
                face_ids: ids(&[3]),
            },
        ];
        let r = apply_ops(&m, &ops).unwrap();
        assert_eq!(r.changed_face_ids, ids(&[2]));
        assert_eq!(
            r.api_calls[1],
            ApiCall::TranslateFaces {
                face_ids: ids(&[2]),
                vector: [0.0, 0.0, 1.0]
            }
        );
        let bad = vec![
            ops[0].clone(),
            EditOp {
                face_ids: ids(&[1]),
                ..ops[1].clone()
            },
        ];
        assert!(apply_ops(&m, &bad).is_err());
    }

    #[test]
    fn replay_through_json_is_exact() {
        let (m, slot) = slot_model();
        let ops = vec![
            EditOp {
                operation: Operation::Rotate {
                    axis: Axis::Y,
                    angle_deg: 33.3,
                },
                face_ids: slot.clone(),
            },
            EditOp {
                operation: Operation::Resize { factor: 0.7 },
                face_ids: slot.clone(),
            },
        ];
        let r = apply_ops(&m, &ops).unwrap();
        let log = serde_json::to_string(&r.api_calls).unwrap();
        let calls: Vec<ApiCall> = serde_json::from_str(&log).unwrap();
        let replayed = replay_api_calls(&model_from_json(&model_to_json(&m)).unwrap(), &calls).unwrap();
        assert_eq!(model_to_json(&replayed), model_to_json(&r.model));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn rigid_edits_preserve_triangles(angle in -359.0f64..359.0, axis in 0usize..3, d in 0.1f64..20.0) {
            let (m, slot) = slot_model();
            let axis = [Axis::X, Axis::Y, Axis::Z][axis];
            let ops = vec![
                EditOp { operation: Operation::Rotate { axis, angle_deg: angle }, face_ids: slot.clone() },
                EditOp { operation: Operation::Move { axis, sign: Sign::Minus, distance_mm: d }, face_ids: slot.clone() },
            ];
            let r = apply_ops(&m, &ops).unwrap();
            for (a, b) in m.faces.iter().zip(&r.model.faces) {
                if !slot.contains(&a.id) {
                    prop_assert_eq!(a, b);
                    continue;
                }
                for (s, t) in a.triangles.iter().zip(&b.triangles) {
                    prop_assert!((s.area() - t.area()).abs() < 1e-9);
                    for k in 0..3 {
                        let ang = |v: &[Vec3; 3]| {
                            let (p, q, r) = (v[k], v[(k + 1) % 3], v[(k + 2) % 3]);
                            let (u, w) = (q - p, r - p);
                            (u.dot(w) / (u.norm() * w.norm())).clamp(-1.0, 1.0).acos()
                        };
                        prop_assert!((ang(&s.vertices) - ang(&t.vertices)).abs() < 1e-9);
                    }
                }
            }
        }
    }
}
