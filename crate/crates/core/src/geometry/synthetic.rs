//! Labeled synthetic models: a base box with machining features cut into it.
//!
//! Every feature is an axis-aligned prism ("cutter"): a convex 2D profile in
//! two axes, extruded over an interval of the third. Box faces are the box
//! rectangles minus each cutter's cross-section on that plane; feature faces
//! are the cutter's interior side faces and end caps. Labels therefore come
//! straight from construction and need no recognition step.
//!
//! Faces created per template:
//!
//! | type                  | faces                          |
//! |-----------------------|--------------------------------|
//! | rect_through_slot     | 2 walls, floor                 |
//! | rect_blind_slot       | 2 walls, floor, end wall       |
//! | triangular_slot       | 2 slanted walls                |
//! | circular_through_hole | cylindrical wall               |
//! | circular_blind_hole   | cylindrical wall, floor        |
//! | rect_pocket           | 4 walls, floor                 |
//! | step                  | wall, floor                    |
//! | side_notch            | 2 walls, back wall             |

use std::collections::{BTreeMap, BTreeSet};
use std::f64::consts::TAU;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::region::{self, Region, P2};
use super::{compute_adjacency, save_model, FaceRecord, FeatureLabel, LoopPolygon, MeshModel, Triangle, Vec3};
use crate::error::{Error, Result};
use crate::feature::FeatureType;

/// Segments used to approximate circular profiles.
pub const CIRCLE_SEGMENTS: usize = 16;
/// Minimum clearance between features and between a feature and unrelated box faces (mm).
pub const FEATURE_MARGIN: f64 = 3.0;
const PLACEMENT_RETRIES: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxDims {
    pub length: f64,
    pub width: f64,
    pub height: f64,
}

impl BoxDims {
    fn hi(&self) -> Vec3 {
        Vec3::new(self.length, self.width, self.height)
    }
}

/// A placed feature: profile in `(profile_axes.0, profile_axes.1)`,
/// extruded along `extrude_axis` over `extent`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticSpec {
    pub feature_type: FeatureType,
    pub profile_axes: (usize, usize),
    pub extrude_axis: usize,
    pub profile: Vec<P2>,
    pub extent: (f64, f64),
}

impl SyntheticSpec {
    fn point(&self, p: P2, e: f64) -> Vec3 {
        Vec3::ZERO
            .with_axis(self.profile_axes.0, p[0])
            .with_axis(self.profile_axes.1, p[1])
            .with_axis(self.extrude_axis, e)
    }

    fn smooth(&self) -> bool {
        matches!(
            self.feature_type,
            FeatureType::CircularThroughHole | FeatureType::CircularBlindHole
        )
    }

    fn bounds(&self) -> (Vec3, Vec3) {
        let pts = self
            .profile
            .iter()
            .flat_map(|&p| [self.point(p, self.extent.0), self.point(p, self.extent.1)]);
        pts.fold(
            (
                Vec3::new(f64::MAX, f64::MAX, f64::MAX),
                Vec3::new(f64::MIN, f64::MIN, f64::MIN),
            ),
            |(lo, hi), v| {
                (
                    Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z)),
                    Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z)),
                )
            },
        )
    }

    fn overlaps(&self, other: &SyntheticSpec) -> bool {
        let (a0, a1) = self.bounds();
        let (b0, b1) = other.bounds();
        (0..3).all(|ax| a0.axis(ax) - FEATURE_MARGIN < b1.axis(ax) && b0.axis(ax) - FEATURE_MARGIN < a1.axis(ax))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub model_id: String,
    pub dims: BoxDims,
    pub features: Vec<SyntheticSpec>,
}

/// One box face: normal axis, side, and in-plane axes with `u x v` = outward normal.
struct BoxFace {
    axis: usize,
    at_max: bool,
    u: usize,
    v: usize,
}

const BOX_FACES: [BoxFace; 6] = [
    BoxFace {
        axis: 2,
        at_max: false,
        u: 1,
        v: 0,
    },
    BoxFace {
        axis: 2,
        at_max: true,
        u: 0,
        v: 1,
    },
    BoxFace {
        axis: 1,
        at_max: false,
        u: 0,
        v: 2,
    },
    BoxFace {
        axis: 1,
        at_max: true,
        u: 2,
        v: 0,
    },
    BoxFace {
        axis: 0,
        at_max: false,
        u: 2,
        v: 1,
    },
    BoxFace {
        axis: 0,
        at_max: true,
        u: 1,
        v: 2,
    },
];

fn oriented(mut tri: [Vec3; 3], normal: Vec3) -> [Vec3; 3] {
    if (tri[1] - tri[0]).cross(tri[2] - tri[0]).dot(normal) < 0.0 {
        tri.swap(1, 2);
    }
    tri
}

fn face_from_triangles(tris: Vec<[Vec3; 3]>, loops: Vec<Vec<Vec3>>) -> FaceRecord {
    FaceRecord {
        id: 0,
        triangles: tris.into_iter().enumerate().map(|(i, t)| Triangle::new(t, i)).collect(),
        loops: loops.into_iter().map(|vertices| LoopPolygon { vertices }).collect(),
        neighbor_face_ids: BTreeSet::new(),
    }
}

fn ccw(mut poly: Vec<P2>) -> Vec<P2> {
    if region::signed_area(&poly) < 0.0 {
        poly.reverse();
    }
    poly
}

/// Builds the labeled mesh for a model spec.
pub fn build_model(spec: &ModelSpec) -> Result<MeshModel> {
    let hi = spec.dims.hi();
    let mut faces: Vec<FaceRecord> = Vec::new();

    for bf in &BOX_FACES {
        let c = if bf.at_max { hi.axis(bf.axis) } else { 0.0 };
        let sections: Vec<Vec<P2>> = spec.features.iter().filter_map(|f| cross_section(f, bf, c)).collect();
        let lo2 = [0.0, 0.0];
        let hi2 = [hi.axis(bf.u), hi.axis(bf.v)];
        let to3 = |p: P2| {
            Vec3::ZERO
                .with_axis(bf.u, p[0])
                .with_axis(bf.v, p[1])
                .with_axis(bf.axis, c)
        };
        let normal = Vec3::ZERO.with_axis(bf.axis, if bf.at_max { 1.0 } else { -1.0 });
        for reg in region::subtract_sections(lo2, hi2, &sections)? {
            faces.push(region_face(&reg, &to3, normal)?);
        }
    }

    let mut labels = Vec::new();
    for feat in &spec.features {
        let first = faces.len();
        faces.extend(feature_faces(feat, &hi)?);
        labels.push(FeatureLabel {
            feature_type: feat.feature_type.name().to_string(),
            face_ids: (first + 1..=faces.len()).collect(),
        });
    }
    for (i, f) in faces.iter_mut().enumerate() {
        f.id = i + 1;
    }
    let model = compute_adjacency(&MeshModel {
        model_id: spec.model_id.clone(),
        faces,
        labels,
    });
    model.validate()?;
    Ok(model)
}

fn region_face(reg: &Region, to3: &impl Fn(P2) -> Vec3, normal: Vec3) -> Result<FaceRecord> {
    let tris = region::triangulate(reg)?
        .into_iter()
        .map(|t| oriented(t.map(to3), normal))
        .collect();
    let loops = std::iter::once(&reg.outer)
        .chain(&reg.holes)
        .map(|l| l.iter().map(|&p| to3(p)).collect())
        .collect();
    Ok(face_from_triangles(tris, loops))
}

/// Cross-section of a cutter on the box plane `axis = c`, in the face's (u, v) frame.
fn cross_section(f: &SyntheticSpec, bf: &BoxFace, c: f64) -> Option<Vec<P2>> {
    let to2 = |p: Vec3| [p.axis(bf.u), p.axis(bf.v)];
    if bf.axis == f.extrude_axis {
        if c < f.extent.0 || c > f.extent.1 {
            return None;
        }
        return Some(f.profile.iter().map(|&p| to2(f.point(p, c))).collect());
    }
    let slot = if bf.axis == f.profile_axes.0 { 0 } else { 1 };
    let n = f.profile.len();
    (0..n).find_map(|i| {
        let (a, b) = (f.profile[i], f.profile[(i + 1) % n]);
        if a[slot] != c || b[slot] != c {
            return None;
        }
        let corners = [
            f.point(a, f.extent.0),
            f.point(b, f.extent.0),
            f.point(b, f.extent.1),
            f.point(a, f.extent.1),
        ];
        Some(corners.iter().map(|&p| to2(p)).collect())
    })
}

fn feature_faces(f: &SyntheticSpec, hi: &Vec3) -> Result<Vec<FaceRecord>> {
    let n = f.profile.len();
    let centroid = f
        .profile
        .iter()
        .fold([0.0, 0.0], |acc, p| [acc[0] + p[0], acc[1] + p[1]]);
    let centroid = [centroid[0] / n as f64, centroid[1] / n as f64];
    let on_box_boundary = |a: P2, b: P2| {
        (0..2).any(|s| {
            let ax = if s == 0 { f.profile_axes.0 } else { f.profile_axes.1 };
            a[s] == b[s] && (a[s] == 0.0 || a[s] == hi.axis(ax))
        })
    };
    let (e0, e1) = f.extent;

    let mut side: Vec<(Vec<[Vec3; 3]>, Vec<Vec<Vec3>>)> = Vec::new();
    let mut smooth_tris = Vec::new();
    for i in 0..n {
        let (a, b) = (f.profile[i], f.profile[(i + 1) % n]);
        if on_box_boundary(a, b) {
            continue;
        }
        let mid = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
        let inward = f.point([centroid[0] - mid[0], centroid[1] - mid[1]], 0.0);
        let quad = [f.point(a, e0), f.point(b, e0), f.point(b, e1), f.point(a, e1)];
        let tris = vec![
            oriented([quad[0], quad[1], quad[2]], inward),
            oriented([quad[0], quad[2], quad[3]], inward),
        ];
        if f.smooth() {
            smooth_tris.extend(tris);
        } else {
            side.push((tris, vec![quad.to_vec()]));
        }
    }
    if f.smooth() {
        let ring = |e: f64| f.profile.iter().map(|&p| f.point(p, e)).collect::<Vec<_>>();
        side.push((smooth_tris, vec![ring(e0), ring(e1)]));
    }

    let mut faces: Vec<FaceRecord> = side.into_iter().map(|(t, l)| face_from_triangles(t, l)).collect();

    let cap = |e: f64, dir: f64| -> Result<FaceRecord> {
        let reg = Region {
            outer: ccw(f.profile.clone()),
            holes: vec![],
        };
        let normal = f.point([0.0, 0.0], dir);
        region_face(&reg, &|p| f.point(p, e), normal)
    };
    let e_max = hi.axis(f.extrude_axis);
    if e0 > 0.0 {
        faces.push(cap(e0, 1.0)?);
    }
    if e1 < e_max {
        faces.push(cap(e1, -1.0)?);
    }
    Ok(faces)
}

fn uniform(rng: &mut impl Rng, lo: f64, hi: f64) -> f64 {
    if hi <= lo {
        lo
    } else {
        rng.gen_range(lo..hi)
    }
}

/// Rounds to 1/64 mm so generated coordinates are exactly representable.
fn q(x: f64) -> f64 {
    (x * 64.0).round() / 64.0
}

/// Samples one placement of `ty` inside `dims`.
pub fn sample_feature(ty: FeatureType, dims: &BoxDims, rng: &mut impl Rng) -> SyntheticSpec {
    let (l, w, h) = (dims.length, dims.width, dims.height);
    let m = FEATURE_MARGIN;
    let axis_len = |ax: usize| [l, w, h][ax];
    match ty {
        FeatureType::RectThroughSlot | FeatureType::RectBlindSlot | FeatureType::TriangularSlot => {
            // Slot runs along `along`; its profile lies in (across, z).
            let along = rng.gen_range(0..2usize);
            let across = 1 - along;
            let span = axis_len(across);
            let width = q(uniform(rng, 6.0, 14.0).min(span * 0.3));
            let depth = q(uniform(rng, 0.2, 0.5) * h);
            let s0 = q(uniform(rng, m, span - m - width));
            let profile = if ty == FeatureType::TriangularSlot {
                vec![[s0, h], [s0 + width * 0.5, h - depth], [s0 + width, h]]
            } else {
                vec![[s0, h - depth], [s0 + width, h - depth], [s0 + width, h], [s0, h]]
            };
            let len = axis_len(along);
            let extent = if ty == FeatureType::RectBlindSlot {
                let reach = q(uniform(rng, 0.3, 0.7) * len);
                if rng.gen_bool(0.5) {
                    (0.0, reach)
                } else {
                    (len - reach, len)
                }
            } else {
                (0.0, len)
            };
            SyntheticSpec {
                feature_type: ty,
                profile_axes: (across, 2),
                extrude_axis: along,
                profile: ccw(profile),
                extent,
            }
        }
        FeatureType::CircularThroughHole | FeatureType::CircularBlindHole => {
            let r = q(uniform(rng, 3.0, 8.0));
            let cx = q(uniform(rng, r + m, l - r - m));
            let cy = q(uniform(rng, r + m, w - r - m));
            let profile = (0..CIRCLE_SEGMENTS)
                .map(|i| {
                    let t = TAU * i as f64 / CIRCLE_SEGMENTS as f64;
                    [cx + r * t.cos(), cy + r * t.sin()]
                })
                .collect();
            let extent = if ty == FeatureType::CircularThroughHole {
                (0.0, h)
            } else {
                (q(h - uniform(rng, 0.3, 0.7) * h), h)
            };
            SyntheticSpec {
                feature_type: ty,
                profile_axes: (0, 1),
                extrude_axis: 2,
                profile,
                extent,
            }
        }
        FeatureType::RectPocket => {
            let a = q(uniform(rng, 8.0, 25.0).min(l * 0.4));
            let b = q(uniform(rng, 8.0, 25.0).min(w * 0.4));
            let x0 = q(uniform(rng, m, l - m - a));
            let y0 = q(uniform(rng, m, w - m - b));
            let depth = q(uniform(rng, 0.2, 0.6) * h);
            SyntheticSpec {
                feature_type: ty,
                profile_axes: (0, 1),
                extrude_axis: 2,
                profile: vec![[x0, y0], [x0 + a, y0], [x0 + a, y0 + b], [x0, y0 + b]],
                extent: (h - depth, h),
            }
        }
        FeatureType::Step => {
            // Step along one top edge; profile in (side axis, z), extruded along the other.
            let side_axis = rng.gen_range(0..2usize);
            let run_axis = 1 - side_axis;
            let span = axis_len(side_axis);
            let wid = q(uniform(rng, 0.15, 0.3) * span);
            let depth = q(uniform(rng, 0.2, 0.5) * h);
            let (s0, s1) = if rng.gen_bool(0.5) {
                (span - wid, span)
            } else {
                (0.0, wid)
            };
            SyntheticSpec {
                feature_type: ty,
                profile_axes: (side_axis, 2),
                extrude_axis: run_axis,
                profile: vec![[s0, h - depth], [s1, h - depth], [s1, h], [s0, h]],
                extent: (0.0, axis_len(run_axis)),
            }
        }
        FeatureType::SideNotch => {
            // Full-height notch into one side wall; profile in (x, y).
            let side_axis = rng.gen_range(0..2usize);
            let along = 1 - side_axis;
            let along_len = axis_len(along);
            let wid = q(uniform(rng, 6.0, 16.0).min(along_len * 0.3));
            let dep = q(uniform(rng, 0.15, 0.35) * axis_len(side_axis));
            let a0 = q(uniform(rng, m, along_len - m - wid));
            let at_max = rng.gen_bool(0.5);
            let (d0, d1) = if at_max {
                (axis_len(side_axis) - dep, axis_len(side_axis))
            } else {
                (0.0, dep)
            };
            // Points as (along, side) then mapped into (x, y) order.
            let rect = [[a0, d0], [a0 + wid, d0], [a0 + wid, d1], [a0, d1]];
            let profile = rect
                .iter()
                .map(|&[a, d]| if along == 0 { [a, d] } else { [d, a] })
                .collect();
            SyntheticSpec {
                feature_type: ty,
                profile_axes: (0, 1),
                extrude_axis: 2,
                profile: ccw(profile),
                extent: (0.0, h),
            }
        }
    }
}

pub fn sample_dims(rng: &mut impl Rng) -> BoxDims {
    BoxDims {
        length: q(uniform(rng, 60.0, 100.0)),
        width: q(uniform(rng, 40.0, 80.0)),
        height: q(uniform(rng, 20.0, 40.0)),
    }
}

/// Places one feature per entry of `types` (with retries); types that cannot
/// be placed are returned in the second slot.
pub fn place_features(
    types: &[FeatureType],
    dims: &BoxDims,
    rng: &mut impl Rng,
) -> (Vec<SyntheticSpec>, Vec<FeatureType>) {
    let mut placed: Vec<SyntheticSpec> = Vec::new();
    let mut failed = Vec::new();
    for &ty in types {
        let candidate = (0..PLACEMENT_RETRIES)
            .map(|_| sample_feature(ty, dims, rng))
            .find(|c| placed.iter().all(|p| !p.overlaps(c)));
        match candidate {
            Some(c) => placed.push(c),
            None => failed.push(ty),
        }
    }
    (placed, failed)
}

/// A single labeled model with the given feature types, reproducible from `seed`.
pub fn generate_model(model_id: &str, types: &[FeatureType], seed: u64) -> Result<MeshModel> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dims = sample_dims(&mut rng);
    let (features, failed) = place_features(types, &dims, &mut rng);
    if !failed.is_empty() {
        return Err(Error::InvalidArgument(format!("could not place {failed:?}")));
    }
    build_model(&ModelSpec {
        model_id: model_id.to_string(),
        dims,
        features,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub model_id: String,
    pub faces: usize,
    pub features: Vec<FeatureType>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub seed: u64,
    pub requested: usize,
    pub generated: usize,
    pub per_type: BTreeMap<String, usize>,
    pub skipped_features: Vec<String>,
    pub models: Vec<ManifestEntry>,
}

/// Generates `count` models, balancing feature types round-robin.
pub fn generate_dataset(count: usize, seed: u64) -> Result<(Vec<MeshModel>, DatasetManifest)> {
    if count == 0 {
        return Err(Error::InvalidArgument("count must be at least 1".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut next_type = 0usize;
    let mut models = Vec::with_capacity(count);
    let mut manifest = DatasetManifest {
        seed,
        requested: count,
        generated: 0,
        per_type: FeatureType::ALL.iter().map(|t| (t.name().to_string(), 0)).collect(),
        skipped_features: vec![],
        models: vec![],
    };
    for i in 0..count {
        let n_features = rng.gen_range(1..=3usize);
        let types: Vec<FeatureType> = (0..n_features)
            .map(|k| FeatureType::ALL[(next_type + k) % FeatureType::ALL.len()])
            .collect();
        let dims = sample_dims(&mut rng);
        let (features, failed) = place_features(&types, &dims, &mut rng);
        for ty in &failed {
            tracing::warn!(model = i, feature = ty.name(), "placement failed; skipping feature");
            manifest.skipped_features.push(format!("model_{i:05}:{}", ty.name()));
        }
        next_type += features.len();
        if features.is_empty() {
            continue;
        }
        let spec = ModelSpec {
            model_id: format!("synth_{seed}_{i:05}"),
            dims,
            features,
        };
        let model = build_model(&spec)?;
        for f in &spec.features {
            *manifest.per_type.entry(f.feature_type.name().to_string()).or_default() += 1;
        }
        manifest.models.push(ManifestEntry {
            file: format!("{}.json", spec.model_id),
            model_id: spec.model_id.clone(),
            faces: model.face_count(),
            features: spec.features.iter().map(|f| f.feature_type).collect(),
        });
        models.push(model);
    }
    manifest.generated = models.len();
    Ok((models, manifest))
}

/// Writes a generated dataset plus `manifest.json` into `out_dir`.
pub fn generate_synthetic_dataset(count: usize, seed: u64, out_dir: impl AsRef<Path>) -> Result<DatasetManifest> {
    let out_dir = out_dir.as_ref();
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let (models, manifest) = generate_dataset(count, seed)?;
    for (model, entry) in models.iter().zip(&manifest.models) {
        save_model(model, out_dir.join(&entry.file))?;
    }
    let path = out_dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

/// Loads every model listed in a dataset directory's manifest.
pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Vec<MeshModel>> {
    let dir = dir.as_ref();
    let path = dir.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let manifest: DatasetManifest = serde_json::from_str(&text).map_err(|e| Error::Parse(e.to_string()))?;
    manifest
        .models
        .iter()
        .map(|e| super::load_model(dir.join(&e.file)))
        .collect()
}

#[cfg(test)]
mod tests {
    use std::collections::HashMap;

    use super::*;
    use crate::geometry::{edge_key, triangle_edges};

    fn watertight(model: &MeshModel) -> bool {
        let mut uses: HashMap<_, usize> = HashMap::new();
        for f in &model.faces {
            for t in &f.triangles {
                for (a, b) in triangle_edges(t) {
                    *uses.entry(edge_key(a, b)).or_default() += 1;
                }
            }
        }
        uses.values().all(|&c| c == 2)
    }

    fn signed_volume(model: &MeshModel) -> f64 {
        model
            .faces
            .iter()
            .flat_map(|f| &f.triangles)
            .map(|t| t.vertices[0].dot(t.vertices[1].cross(t.vertices[2])) / 6.0)
            .sum()
    }

    #[test]
    fn every_template_builds_closed_solid_with_expected_label() {
        for (i, ty) in FeatureType::ALL.iter().enumerate() {
            for seed in 0..20u64 {
                let m = generate_model("t", &[*ty], seed * 31 + i as u64).unwrap();
                assert!(watertight(&m), "{ty} seed {seed} not watertight");
                assert!(signed_volume(&m) > 0.0, "{ty} inverted");
                assert_eq!(m.labels.len(), 1);
                assert_eq!(m.labels[0].face_ids.len(), ty.template_face_count(), "{ty}");
            }
        }
    }

    #[test]
    fn removed_volume_matches_profile() {
        // Pocket volume is exact: a * b * depth.
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let dims = sample_dims(&mut rng);
        let f = sample_feature(FeatureType::RectPocket, &dims, &mut rng);
        let m = build_model(&ModelSpec {
            model_id: "p".into(),
            dims,
            features: vec![f.clone()],
        })
        .unwrap();
        let area = region::signed_area(&f.profile);
        let expected = dims.length * dims.width * dims.height - area * (f.extent.1 - f.extent.0);
        assert!((signed_volume(&m) - expected).abs() < 1e-6);
    }

    #[test]
    fn through_slot_topology() {
        let m = generate_model("slot", &[FeatureType::RectThroughSlot], 7).unwrap();
        let label: Vec<usize> = m.labels[0].face_ids.iter().copied().collect();
        // The floor is the one slot face touching both others.
        let floor = *label
            .iter()
            .find(|&&id| {
                label
                    .iter()
                    .filter(|&&o| o != id)
                    .all(|o| m.face(id).unwrap().neighbor_face_ids.contains(o))
            })
            .expect("floor face");
        let walls: Vec<usize> = label.iter().copied().filter(|&id| id != floor).collect();
        let (w0, w1) = (walls[0], walls[1]);
        let floor_face = m.face(floor).unwrap();
        assert!(floor_face.neighbor_face_ids.contains(&w0));
        assert!(floor_face.neighbor_face_ids.contains(&w1));
        assert!(!m.face(w0).unwrap().neighbor_face_ids.contains(&w1));
        // Top face split in two: 6 box faces + 1 extra piece + 3 slot faces.
        assert_eq!(m.face_count(), 10);
        // No base-box face is labeled.
        assert!(label.iter().all(|&id| id > 7));
    }

    #[test]
    fn through_hole_has_two_loops() {
        let m = generate_model("h", &[FeatureType::CircularThroughHole], 3).unwrap();
        let wall = m.face(*m.labels[0].face_ids.iter().next().unwrap()).unwrap();
        assert_eq!(wall.loops.len(), 2);
        assert_eq!(wall.triangles.len(), 2 * CIRCLE_SEGMENTS);
        // Top and bottom faces each carry the hole as an inner loop.
        let holed = m.faces.iter().filter(|f| f.loops.len() == 2 && f.id <= 6).count();
        assert_eq!(holed, 2);
    }

    #[test]
    fn multi_feature_models_are_valid() {
        let (models, manifest) = generate_dataset(60, 11).unwrap();
        assert_eq!(manifest.generated, models.len());
        for m in &models {
            assert!(watertight(m), "{} not watertight", m.model_id);
            let mut labeled = BTreeSet::new();
            for l in &m.labels {
                assert!(l.face_ids.iter().all(|id| labeled.insert(*id)), "labels overlap");
            }
        }
    }

    #[test]
    fn manifest_is_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        generate_synthetic_dataset(5, 7, a.path()).unwrap();
        generate_synthetic_dataset(5, 7, b.path()).unwrap();
        let ma = std::fs::read(a.path().join("manifest.json")).unwrap();
        let mb = std::fs::read(b.path().join("manifest.json")).unwrap();
        assert_eq!(ma, mb);
        assert_eq!(load_dataset(a.path()).unwrap().len(), 5);
    }

    #[test]
    fn zero_count_rejected() {
        assert!(generate_dataset(0, 1).is_err());
    }
}
