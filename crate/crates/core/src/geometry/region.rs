//! Planar regions of an axis-aligned rectangle with convex cut-outs removed.
//!
//! The cut-outs must be pairwise disjoint (no shared points). A cut-out may
//! lie strictly inside the rectangle (it becomes a hole) or touch the
//! boundary along whole edges (it becomes a notch, or splits the rectangle).
//! Output vertices are always copies of input vertices, never recomputed,
//! so regions built on neighboring faces meet at bit-identical points.

use std::collections::HashMap;

use crate::error::{Error, Result};

pub type P2 = [f64; 2];

const EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct Region {
    /// Counter-clockwise outer boundary.
    pub outer: Vec<P2>,
    /// Clockwise inner boundaries.
    pub holes: Vec<Vec<P2>>,
}

pub fn signed_area(poly: &[P2]) -> f64 {
    let n = poly.len();
    (0..n)
        .map(|i| {
            let (a, b) = (poly[i], poly[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

fn cross(o: P2, a: P2, b: P2) -> f64 {
    (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])
}

/// Point inside or on the boundary of a counter-clockwise convex polygon.
fn in_convex_closed(poly: &[P2], p: P2) -> bool {
    let n = poly.len();
    (0..n).all(|i| cross(poly[i], poly[(i + 1) % n], p) >= -EPS)
}

fn point_in_polygon(poly: &[P2], p: P2) -> bool {
    let mut inside = false;
    let n = poly.len();
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a[1] > p[1]) != (b[1] > p[1]) && p[0] < (b[0] - a[0]) * (p[1] - a[1]) / (b[1] - a[1]) + a[0] {
            inside = !inside;
        }
        j = i;
    }
    inside
}

fn key(p: P2) -> (u64, u64) {
    // Adding 0.0 folds -0.0 into 0.0.
    ((p[0] + 0.0).to_bits(), (p[1] + 0.0).to_bits())
}

/// Subtracts `sections` from the rectangle `[lo, hi]`.
pub fn subtract_sections(lo: P2, hi: P2, sections: &[Vec<P2>]) -> Result<Vec<Region>> {
    let sections: Vec<Vec<P2>> = sections
        .iter()
        .map(|s| {
            let mut s = s.clone();
            if signed_area(&s) < 0.0 {
                s.reverse();
            }
            s
        })
        .collect();

    let corners = [lo, [hi[0], lo[1]], hi, [lo[0], hi[1]]];
    let mut edges: Vec<(P2, P2)> = Vec::new();

    for i in 0..4 {
        let (a, b) = (corners[i], corners[(i + 1) % 4]);
        let along = if a[1] == b[1] { 0 } else { 1 };
        let fixed = 1 - along;
        let (t0, t1) = (a[along], b[along]);
        let mut stops = vec![a, b];
        for s in &sections {
            for &v in s {
                let within = v[along] > t0.min(t1) && v[along] < t0.max(t1);
                if v[fixed] == a[fixed] && within {
                    stops.push(v);
                }
            }
        }
        stops.sort_by(|p, q| {
            let (dp, dq) = ((p[along] - t0).abs(), (q[along] - t0).abs());
            dp.total_cmp(&dq)
        });
        stops.dedup_by(|p, q| key(*p) == key(*q));
        for w in stops.windows(2) {
            let mid = [(w[0][0] + w[1][0]) * 0.5, (w[0][1] + w[1][1]) * 0.5];
            if !sections.iter().any(|s| in_convex_closed(s, mid)) {
                edges.push((w[0], w[1]));
            }
        }
    }

    let strictly_inside = |p: P2| p[0] > lo[0] + EPS && p[0] < hi[0] - EPS && p[1] > lo[1] + EPS && p[1] < hi[1] - EPS;
    for s in &sections {
        let n = s.len();
        // Clockwise traversal keeps the removed material on the right.
        for i in 0..n {
            let (a, b) = (s[(i + 1) % n], s[i]);
            let mid = [(a[0] + b[0]) * 0.5, (a[1] + b[1]) * 0.5];
            if strictly_inside(mid) {
                edges.push((a, b));
            }
        }
    }

    let mut by_start: HashMap<(u64, u64), usize> = HashMap::new();
    for (i, e) in edges.iter().enumerate() {
        if by_start.insert(key(e.0), i).is_some() {
            return Err(Error::Degenerate("cut-outs touch each other".into()));
        }
    }
    let mut used = vec![false; edges.len()];
    let mut loops: Vec<Vec<P2>> = Vec::new();
    for start in 0..edges.len() {
        if used[start] {
            continue;
        }
        let mut lp = Vec::new();
        let mut cur = start;
        loop {
            if used[cur] {
                return Err(Error::Degenerate("open boundary while tracing region".into()));
            }
            used[cur] = true;
            lp.push(edges[cur].0);
            cur = *by_start
                .get(&key(edges[cur].1))
                .ok_or_else(|| Error::Degenerate("dangling region edge".into()))?;
            if cur == start {
                break;
            }
        }
        loops.push(lp);
    }

    let (outers, holes): (Vec<_>, Vec<_>) = loops.into_iter().partition(|l| signed_area(l) > 0.0);
    let mut regions: Vec<Region> = outers
        .into_iter()
        .map(|outer| Region { outer, holes: vec![] })
        .collect();
    for hole in holes {
        let probe = hole[0];
        let owner = regions
            .iter_mut()
            .find(|r| point_in_polygon(&r.outer, probe))
            .ok_or_else(|| Error::Degenerate("hole outside every region".into()))?;
        owner.holes.push(hole);
    }
    // Stable order: by lowest outer vertex (lexicographic).
    regions.sort_by(|a, b| {
        let m = |r: &Region| {
            r.outer
                .iter()
                .copied()
                .fold([f64::MAX; 2], |m, p| if (p[0], p[1]) < (m[0], m[1]) { p } else { m })
        };
        let (ma, mb) = (m(a), m(b));
        ma[0].total_cmp(&mb[0]).then(ma[1].total_cmp(&mb[1]))
    });
    Ok(regions)
}

/// Triangulates a region; every output vertex is one of the region's vertices.
pub fn triangulate(region: &Region) -> Result<Vec<[P2; 3]>> {
    let mut all: Vec<P2> = region.outer.clone();
    let mut hole_starts = Vec::new();
    for h in &region.holes {
        hole_starts.push(all.len());
        all.extend_from_slice(h);
    }
    let flat: Vec<f64> = all.iter().flat_map(|p| [p[0], p[1]]).collect();
    let idx = earcutr::earcut(&flat, &hole_starts, 2)
        .map_err(|e| Error::Degenerate(format!("triangulation failed: {e:?}")))?;
    let tris: Vec<[P2; 3]> = idx
        .chunks_exact(3)
        .map(|c| [all[c[0]], all[c[1]], all[c[2]]])
        .filter(|t| cross(t[0], t[1], t[2]).abs() > EPS)
        .collect();
    let expected = region_area(region);
    let got: f64 = tris.iter().map(|t| cross(t[0], t[1], t[2]).abs() * 0.5).sum();
    if (got - expected).abs() > 1e-9 * expected.max(1.0) {
        return Err(Error::Degenerate(format!("triangulation covers {got} of {expected}")));
    }
    Ok(tris)
}

pub fn region_area(region: &Region) -> f64 {
    signed_area(&region.outer) + region.holes.iter().map(|h| signed_area(h)).sum::<f64>()
}
