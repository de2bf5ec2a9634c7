//! Flattening of a block's 3D points into a 2D parameter plane.
//!
//! The points of a block are connected by a Euclidean minimum spanning tree.
//! Starting from a root at the origin, every tree edge `(i, j)` moves the
//! child by the folded offsets
//!
//! ```text
//! dx' = sgn(xj - xi) * sqrt((xj - xi)^2 + (zj - zi)^2)
//! dy' = sgn(yj - yi) * sqrt((yj - yi)^2 + (zj - zi)^2)
//! ```
//!
//! so the depth axis is folded into both planar axes instead of being
//! projected away. `sgn(0)` is taken as `+1`.

use std::collections::VecDeque;
use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cloud::{Block, ColorPoint, ColorPointCloud, Point3, Role};
use crate::error::{Error, Result};
use crate::seed::hash_words;

pub fn pairwise_distance(a: &ColorPoint, b: &ColorPoint) -> f64 {
    distance(a.position, b.position)
}

pub(crate) fn distance(a: Point3, b: Point3) -> f64 {
    distance_sq(a, b).sqrt()
}

pub(crate) fn distance_sq(a: Point3, b: Point3) -> f64 {
    let dx = b[0] - a[0];
    let dy = b[1] - a[1];
    let dz = b[2] - a[2];
    dx * dx + dy * dy + dz * dz
}

/// A directed tree edge, parent to child.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MstEdge {
    pub parent_id: usize,
    pub child_id: usize,
    pub weight: f64,
}

/// How the flattening root is chosen inside a block.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum RootPolicy {
    /// Lowest point id of the block.
    #[default]
    Deterministic,
    /// Uniformly random block point, seeded per block from this seed and the
    /// block's cell index.
    SeededRandom(u64),
}

impl RootPolicy {
    pub fn choose_root(&self, block: &Block) -> Result<usize> {
        let first = *block.point_ids.first().ok_or(Error::EmptyBlock)?;
        Ok(match *self {
            RootPolicy::Deterministic => first,
            RootPolicy::SeededRandom(seed) => {
                let [i, j, k] = block.cell_index.map(|c| c as u64);
                let mut rng = ChaCha8Rng::seed_from_u64(hash_words(&[seed, i, j, k]));
                block.point_ids[rng.random_range(0..block.point_ids.len())]
            }
        })
    }
}

struct DisjointSets {
    parent: Vec<usize>,
    rank: Vec<u8>,
}

impl DisjointSets {
    fn new(n: usize) -> Self {
        DisjointSets {
            parent: (0..n).collect(),
            rank: vec![0; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) -> bool {
        let (ra, rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        match self.rank[ra].cmp(&self.rank[rb]) {
            std::cmp::Ordering::Less => self.parent[ra] = rb,
            std::cmp::Ordering::Greater => self.parent[rb] = ra,
            std::cmp::Ordering::Equal => {
                self.parent[rb] = ra;
                self.rank[ra] += 1;
            }
        }
        true
    }
}

/// Kruskal over the complete Euclidean graph. Returns undirected edges as
/// `(smaller_id, larger_id, weight)` in acceptance order. Candidate edges
/// are ordered by `(weight, smaller_id, larger_id)`.
pub fn minimum_spanning_edges(points: &[(usize, Point3)]) -> Vec<(usize, usize, f64)> {
    let n = points.len();
    if n < 2 {
        return Vec::new();
    }
    let mut candidates = Vec::with_capacity(n * (n - 1) / 2);
    for a in 0..n {
        for b in a + 1..n {
            let (lo, hi) = if points[a].0 < points[b].0 { (a, b) } else { (b, a) };
            candidates.push((distance(points[lo].1, points[hi].1), lo, hi));
        }
    }
    candidates.sort_unstable_by(|x, y| {
        x.0.total_cmp(&y.0)
            .then(points[x.1].0.cmp(&points[y.1].0))
            .then(points[x.2].0.cmp(&points[y.2].0))
    });
    let mut sets = DisjointSets::new(n);
    let mut tree = Vec::with_capacity(n - 1);
    for (w, a, b) in candidates {
        if sets.union(a, b) {
            tree.push((points[a].0, points[b].0, w));
            if tree.len() == n - 1 {
                break;
            }
        }
    }
    tree
}

/// Minimum spanning tree over `points` (pairs of point id and position),
/// oriented away from `root_id` by breadth-first traversal with children
/// visited in ascending id.
pub fn build_mst(points: &[(usize, Point3)], root_id: usize) -> Result<Vec<MstEdge>> {
    if points.is_empty() {
        return Err(Error::EmptyBlock);
    }
    let local_of = |id: usize| points.iter().position(|p| p.0 == id);
    let root = local_of(root_id).ok_or_else(|| {
        Error::InvalidInput(format!("root {root_id} is not one of the tree points"))
    })?;

    let undirected = minimum_spanning_edges(points);
    let mut adjacency: Vec<Vec<(usize, f64)>> = vec![Vec::new(); points.len()];
    // ids → local slots; ids inside a block are unique.
    let mut slots: Vec<(usize, usize)> = points.iter().enumerate().map(|(l, p)| (p.0, l)).collect();
    slots.sort_unstable();
    let slot = |id: usize| slots[slots.binary_search_by_key(&id, |s| s.0).unwrap()].1;
    for &(a, b, w) in &undirected {
        let (la, lb) = (slot(a), slot(b));
        adjacency[la].push((lb, w));
        adjacency[lb].push((la, w));
    }
    for adj in &mut adjacency {
        adj.sort_unstable_by_key(|&(l, _)| points[l].0);
    }

    let mut edges = Vec::with_capacity(undirected.len());
    let mut visited = vec![false; points.len()];
    let mut queue = VecDeque::from([root]);
    visited[root] = true;
    while let Some(u) = queue.pop_front() {
        for &(v, w) in &adjacency[u] {
            if !visited[v] {
                visited[v] = true;
                edges.push(MstEdge {
                    parent_id: points[u].0,
                    child_id: points[v].0,
                    weight: w,
                });
                queue.push_back(v);
            }
        }
    }
    Ok(edges)
}

/// `sgn` with `sgn(0) = +1`.
fn sign_nonneg(v: f64) -> f64 {
    if v < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Folded planar offset of `child` relative to `parent`.
pub fn folded_offset(parent: Point3, child: Point3) -> [f64; 2] {
    let dx = child[0] - parent[0];
    let dy = child[1] - parent[1];
    let dz = child[2] - parent[2];
    [
        sign_nonneg(dx) * (dx * dx + dz * dz).sqrt(),
        sign_nonneg(dy) * (dy * dy + dz * dz).sqrt(),
    ]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlatEntry {
    pub point_id: usize,
    pub x: f64,
    pub y: f64,
}

/// 2D layout of one block, one entry per block point in block order.
#[derive(Debug, Clone, PartialEq)]
pub struct FlattenedMesh {
    pub entries: Vec<FlatEntry>,
    pub root_id: usize,
    pub edges: Vec<MstEdge>,
}

impl FlattenedMesh {
    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn coords(&self) -> impl Iterator<Item = [f64; 2]> + '_ {
        self.entries.iter().map(|e| [e.x, e.y])
    }

    /// CSV dump with header `point_id,role,x,y`.
    pub fn to_csv(&self, cloud: &ColorPointCloud) -> String {
        let mut out = String::from("point_id,role,x,y\n");
        for e in &self.entries {
            let role = match cloud.points[e.point_id].role {
                Role::Original => "original",
                Role::Reconstruct => "reconstruct",
            };
            let _ = writeln!(out, "{},{},{},{}", e.point_id, role, e.x, e.y);
        }
        out
    }
}

pub fn flatten_block(
    block: &Block,
    cloud: &ColorPointCloud,
    root_policy: RootPolicy,
) -> Result<FlattenedMesh> {
    let root_id = root_policy.choose_root(block)?;
    let points: Vec<(usize, Point3)> = block
        .point_ids
        .iter()
        .map(|&id| (id, cloud.position(id)))
        .collect();
    let edges = build_mst(&points, root_id)?;

    let local = |id: usize| block.point_ids.binary_search(&id).ok();
    let mut coords = vec![[0.0f64; 2]; points.len()];
    // BFS edge order guarantees each parent is placed before its children.
    for e in &edges {
        let (Some(p), Some(c)) = (local(e.parent_id), local(e.child_id)) else {
            return Err(Error::InvalidInput("block point ids must be ascending".into()));
        };
        let off = folded_offset(points[p].1, points[c].1);
        coords[c] = [coords[p][0] + off[0], coords[p][1] + off[1]];
    }
    Ok(FlattenedMesh {
        entries: points
            .iter()
            .zip(&coords)
            .map(|(&(point_id, _), &[x, y])| FlatEntry { point_id, x, y })
            .collect(),
        root_id,
        edges,
    })
}
