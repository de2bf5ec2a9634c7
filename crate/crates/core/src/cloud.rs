//! Colored point clouds and the cuboid block partition that scopes every
//! local computation.
//!
//! A cloud mixes two kinds of points: originals, which carry a known color,
//! and points to reconstruct, which carry coordinates only. Storage order is
//! significant: point indices are used as the tie-break identity by every
//! algorithm in the crate.

use std::collections::BTreeMap;

use crate::error::{Error, Result};

pub type Point3 = [f64; 3];

/// An 8-bit RGB triple.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct Rgb(pub [u8; 3]);

impl Rgb {
    pub const fn new(r: u8, g: u8, b: u8) -> Self {
        Rgb([r, g, b])
    }

    pub fn channel(self, c: usize) -> u8 {
        self.0[c]
    }

    /// Rounds to the nearest integer (ties away from zero) and clamps each
    /// channel to `[0, 255]`.
    pub fn from_f64(values: [f64; 3]) -> Self {
        Rgb(values.map(quantize_channel))
    }
}

pub(crate) fn quantize_channel(v: f64) -> u8 {
    if v.is_nan() {
        return 0;
    }
    v.round().clamp(0.0, 255.0) as u8
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Role {
    /// Known color; member of the original set.
    Original,
    /// Coordinates only; color is to be reconstructed.
    Reconstruct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ColorPoint {
    pub position: Point3,
    pub color: Option<Rgb>,
    pub role: Role,
}

impl ColorPoint {
    pub fn original(position: Point3, color: Rgb) -> Self {
        ColorPoint {
            position,
            color: Some(color),
            role: Role::Original,
        }
    }

    pub fn to_reconstruct(position: Point3) -> Self {
        ColorPoint {
            position,
            color: None,
            role: Role::Reconstruct,
        }
    }

    pub fn is_original(&self) -> bool {
        self.role == Role::Original
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ColorPointCloud {
    pub points: Vec<ColorPoint>,
    pub provenance: String,
}

impl ColorPointCloud {
    pub fn new(points: Vec<ColorPoint>, provenance: impl Into<String>) -> Self {
        ColorPointCloud {
            points,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn position(&self, id: usize) -> Point3 {
        self.points[id].position
    }

    pub fn original_count(&self) -> usize {
        self.points.iter().filter(|p| p.is_original()).count()
    }

    pub fn is_fully_colored(&self) -> bool {
        self.points.iter().all(|p| p.color.is_some())
    }

    /// Checks the per-point invariants: finite coordinates, originals
    /// colored.
    pub fn validate(&self) -> Result<()> {
        for (i, p) in self.points.iter().enumerate() {
            if p.position.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput(format!(
                    "point {i} has a non-finite coordinate"
                )));
            }
            if p.role == Role::Original && p.color.is_none() {
                return Err(Error::MissingColor { index: i });
            }
        }
        Ok(())
    }
}

/// Axis-aligned bounding box.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3,
    pub max: Point3,
}

impl Aabb {
    pub fn extent(&self) -> Point3 {
        [
            self.max[0] - self.min[0],
            self.max[1] - self.min[1],
            self.max[2] - self.min[2],
        ]
    }

    pub fn contains(&self, p: Point3) -> bool {
        (0..3).all(|a| p[a] >= self.min[a] && p[a] <= self.max[a])
    }
}

pub fn bounding_box(cloud: &ColorPointCloud) -> Result<Aabb> {
    let first = cloud.points.first().ok_or(Error::EmptyCloud)?.position;
    let mut bb = Aabb {
        min: first,
        max: first,
    };
    for p in &cloud.points[1..] {
        for a in 0..3 {
            bb.min[a] = bb.min[a].min(p.position[a]);
            bb.max[a] = bb.max[a].max(p.position[a]);
        }
    }
    Ok(bb)
}

/// One non-empty cell of the cubic grid partition.
#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub cell_index: [i64; 3],
    /// Ascending indices into the owning cloud.
    pub point_ids: Vec<usize>,
    pub bounds: Aabb,
}

impl Block {
    pub fn len(&self) -> usize {
        self.point_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.point_ids.is_empty()
    }
}

/// Splits the cloud into half-open cubes of edge `block_size`, anchored at
/// the bounding-box minimum. Only non-empty cells are returned, ordered
/// lexicographically by cell index.
pub fn partition_into_blocks(cloud: &ColorPointCloud, block_size: f64) -> Result<Vec<Block>> {
    if !(block_size > 0.0 && block_size.is_finite()) {
        return Err(Error::InvalidConfig(format!(
            "block size must be a positive finite number, got {block_size}"
        )));
    }
    let origin = bounding_box(cloud)?.min;
    let mut cells: BTreeMap<[i64; 3], Vec<usize>> = BTreeMap::new();
    for (id, p) in cloud.points.iter().enumerate() {
        let cell = [0, 1, 2].map(|a| ((p.position[a] - origin[a]) / block_size).floor() as i64);
        cells.entry(cell).or_default().push(id);
    }
    Ok(cells
        .into_iter()
        .map(|(cell_index, point_ids)| {
            let min = [0, 1, 2].map(|a| origin[a] + cell_index[a] as f64 * block_size);
            Block {
                cell_index,
                point_ids,
                bounds: Aabb {
                    min,
                    max: min.map(|m| m + block_size),
                },
            }
        })
        .collect())
}
