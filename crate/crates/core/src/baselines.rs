//! Reference interpolators used for comparison: nearest neighbor and
//! inverse-distance weighting on raw 3D coordinates, and inverse-distance
//! weighting plus Delaunay-barycentric linear interpolation on the flattened
//! 2D layout.

use std::fmt;
use std::str::FromStr;

use spade::{DelaunayTriangulation, FloatTriangulation, HasPosition, Point2, Triangulation};

use crate::cloud::{quantize_channel, Point3, Rgb};
use crate::error::{Error, Result};
use crate::spatial::KdTree;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum InterpolatorKind {
    Nn3,
    Idw3,
    Idw2,
    Lin2Delaunay,
    Fsmmr,
}

impl InterpolatorKind {
    pub const ALL: [InterpolatorKind; 5] = [
        InterpolatorKind::Fsmmr,
        InterpolatorKind::Nn3,
        InterpolatorKind::Idw3,
        InterpolatorKind::Idw2,
        InterpolatorKind::Lin2Delaunay,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InterpolatorKind::Nn3 => "nn3",
            InterpolatorKind::Idw3 => "idw3",
            InterpolatorKind::Idw2 => "idw2",
            InterpolatorKind::Lin2Delaunay => "lin2",
            InterpolatorKind::Fsmmr => "fsmmr",
        }
    }

    /// Whether the method works on the flattened per-block layout.
    pub fn uses_surface_transform(self) -> bool {
        matches!(
            self,
            InterpolatorKind::Idw2 | InterpolatorKind::Lin2Delaunay | InterpolatorKind::Fsmmr
        )
    }
}

impl fmt::Display for InterpolatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InterpolatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InterpolatorKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown method '{s}'")))
    }
}

/// Colors each query with its Euclidean-nearest original. `originals` are
/// `(id, position, color)`; ties go to the smaller id.
pub fn interpolate_nn3(originals: &[(usize, Point3, Rgb)], queries: &[Point3]) -> Result<Vec<Rgb>> {
    if originals.is_empty() {
        return Err(Error::EmptySamples);
    }
    let tree = KdTree::new(originals.iter().map(|&(id, p, _)| (id, p)).collect());
    let mut by_id: Vec<(usize, Rgb)> = originals.iter().map(|o| (o.0, o.2)).collect();
    by_id.sort_unstable_by_key(|o| o.0);
    Ok(queries
        .iter()
        .map(|&q| {
            let id = tree.nearest(q).expect("tree is non-empty");
            let slot = by_id.partition_point(|o| o.0 < id);
            by_id[slot].1
        })
        .collect())
}

/// Shepard interpolation with weights `d^-power` over all given originals.
/// A query coinciding with an original takes that original's color (the
/// lowest-index one when several coincide).
pub fn interpolate_idw<const D: usize>(
    originals: &[([f64; D], Rgb)],
    queries: &[[f64; D]],
    power: f64,
) -> Result<Vec<Rgb>> {
    if !(power > 0.0 && power.is_finite()) {
        return Err(Error::InvalidConfig(format!("IDW power must be positive, got {power}")));
    }
    if originals.is_empty() {
        return Err(Error::EmptySamples);
    }
    Ok(queries
        .iter()
        .map(|q| idw_single(originals.iter().map(|(p, c)| (dist(p, q), *c)), power))
        .collect())
}

fn dist<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Shepard blend of `(distance, color)` pairs.
pub(crate) fn idw_single(neighbors: impl Iterator<Item = (f64, Rgb)>, power: f64) -> Rgb {
    let mut acc = [0.0f64; 3];
    let mut total = 0.0;
    for (d, c) in neighbors {
        if d == 0.0 {
            return c;
        }
        let w = d.powf(-power);
        total += w;
        for ch in 0..3 {
            acc[ch] += w * c.channel(ch) as f64;
        }
    }
    Rgb(acc.map(|a| quantize_channel(a / total)))
}

#[derive(Debug, Clone, Copy)]
struct ColoredVertex {
    position: Point2<f64>,
    color: [f64; 3],
}

impl HasPosition for ColoredVertex {
    type Scalar = f64;

    fn position(&self) -> Point2<f64> {
        self.position
    }
}

/// Delaunay-barycentric interpolation. Queries outside the convex hull of
/// the originals, or any query when the originals span no triangle, get
/// `None`.
pub fn interpolate_lin2(originals: &[([f64; 2], Rgb)], queries: &[[f64; 2]]) -> Vec<Option<Rgb>> {
    let real: Vec<([f64; 2], [f64; 3])> = originals
        .iter()
        .map(|&(p, c)| (p, [0, 1, 2].map(|ch| c.channel(ch) as f64)))
        .collect();
    interpolate_lin2_values(&real, queries)
        .into_iter()
        .map(|v| v.map(|v| Rgb(v.map(quantize_channel))))
        .collect()
}

/// Unquantized form of [`interpolate_lin2`] over real-valued triples.
pub fn interpolate_lin2_values(
    originals: &[([f64; 2], [f64; 3])],
    queries: &[[f64; 2]],
) -> Vec<Option<[f64; 3]>> {
    let mut tri: DelaunayTriangulation<ColoredVertex> = DelaunayTriangulation::new();
    let mut seen = std::collections::HashSet::with_capacity(originals.len());
    for &(p, color) in originals {
        // The first (lowest-index) original wins at a duplicated position.
        if !seen.insert([p[0].to_bits(), p[1].to_bits()]) {
            continue;
        }
        let vertex = ColoredVertex {
            position: Point2::new(p[0], p[1]),
            color,
        };
        // Non-finite or out-of-range coordinates are left out.
        let _ = tri.insert(vertex);
    }
    if tri.num_inner_faces() == 0 {
        return vec![None; queries.len()];
    }
    let barycentric = tri.barycentric();
    let mut weights = Vec::with_capacity(3);
    queries
        .iter()
        .map(|q| {
            barycentric.get_weights(Point2::new(q[0], q[1]), &mut weights);
            if weights.is_empty() {
                return None;
            }
            let mut acc = [0.0f64; 3];
            for &(handle, w) in &weights {
                let color = tri.vertex(handle).data().color;
                for ch in 0..3 {
                    acc[ch] += w * color[ch];
                }
            }
            Some(acc)
        })
        .collect()
}
