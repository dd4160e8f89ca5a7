use serde::{Deserialize, Serialize};

use super::{MeshModel, Vec3};
use crate::error::{Error, Result};

/// Affine map `p -> (p - center) * scale` applied by [`normalize_model`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Normalization {
    pub center: Vec3,
    pub scale: f64,
}

impl Normalization {
    pub fn apply(&self, p: Vec3) -> Vec3 {
        (p - self.center) * self.scale
    }

    pub fn invert(&self, p: Vec3) -> Vec3 {
        p / self.scale + self.center
    }
}

pub fn bounding_box(model: &MeshModel) -> Option<(Vec3, Vec3)> {
    let mut it = model.faces.iter().flat_map(|f| f.vertices());
    let first = it.next()?;
    Some(it.fold((first, first), |(lo, hi), v| {
        (
            Vec3::new(lo.x.min(v.x), lo.y.min(v.y), lo.z.min(v.z)),
            Vec3::new(hi.x.max(v.x), hi.y.max(v.y), hi.z.max(v.z)),
        )
    }))
}

/// Centers the bounding box at the origin and scales its largest extent to 2.
pub fn normalize_model(model: &MeshModel) -> Result<(MeshModel, Normalization)> {
    let (lo, hi) = bounding_box(model).ok_or_else(|| Error::Degenerate("model has no vertices".into()))?;
    let extent = (hi - lo).x.max((hi - lo).y).max((hi - lo).z);
    if !(extent > 0.0) {
        return Err(Error::Degenerate("bounding box has zero extent".into()));
    }
    let norm = Normalization {
        center: (lo + hi) * 0.5,
        scale: 2.0 / extent,
    };
    let mut out = model.clone();
    out.map_vertices(|p| norm.apply(p));
    Ok((out, norm))
}
