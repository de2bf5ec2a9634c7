//! Static k-d tree over 3D points with exact nearest and k-nearest queries.
//! Distance ties resolve to the smaller point id so results match a linear
//! scan exactly.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::cloud::Point3;
use crate::surface::distance_sq;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    /// (id, position), permuted so each leaf owns a contiguous range.
    items: Vec<(usize, Point3)>,
    nodes: Vec<Node>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate {
    dist_sq: f64,
    id: usize,
}

impl Eq for Candidate {}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.dist_sq
            .total_cmp(&other.dist_sq)
            .then(self.id.cmp(&other.id))
    }
}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl KdTree {
    pub fn new(items: Vec<(usize, Point3)>) -> Self {
        let mut tree = KdTree {
            items,
            nodes: Vec::new(),
        };
        if !tree.items.is_empty() {
            let n = tree.items.len();
            tree.build(0, n);
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let slot = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return slot;
        }
        let slice = &mut self.items[start..end];
        let axis = widest_axis(slice);
        let mid = slice.len() / 2;
        slice.select_nth_unstable_by(mid, |a, b| a.1[axis].total_cmp(&b.1[axis]));
        let value = slice[mid].1[axis];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build(start, start + mid);
        let right = self.build(start + mid, end);
        self.nodes[slot] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        slot
    }

    /// Id of the nearest item; ties go to the smaller id.
    pub fn nearest(&self, query: Point3) -> Option<usize> {
        self.k_nearest(query, 1).first().map(|&(id, _)| id)
    }

    /// Up to `k` nearest items as `(id, squared distance)`, ascending by
    /// `(distance, id)`.
    pub fn k_nearest(&self, query: Point3, k: usize) -> Vec<(usize, f64)> {
        if self.items.is_empty() || k == 0 {
            return Vec::new();
        }
        let mut heap = BinaryHeap::with_capacity(k + 1);
        self.search(0, query, k, &mut heap);
        let mut out: Vec<Candidate> = heap.into_vec();
        out.sort_unstable();
        out.into_iter().map(|c| (c.id, c.dist_sq)).collect()
    }

    fn search(&self, node: usize, query: Point3, k: usize, heap: &mut BinaryHeap<Candidate>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &(id, p) in &self.items[start..end] {
                    let cand = Candidate {
                        dist_sq: distance_sq(query, p),
                        id,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if heap.peek().is_some_and(|worst| cand < *worst) {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                // Equal plane distance may still hold a smaller-id tie.
                let reachable = heap.len() < k
                    || heap.peek().is_some_and(|worst| diff * diff <= worst.dist_sq);
                if reachable {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

fn widest_axis(items: &[(usize, Point3)]) -> usize {
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for (_, p) in items {
        for a in 0..3 {
            lo[a] = lo[a].min(p[a]);
            hi[a] = hi[a].max(p[a]);
        }
    }
    (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap_or(0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn scan(items: &[(usize, Point3)], q: Point3, k: usize) -> Vec<(usize, f64)> {
        let mut all: Vec<(usize, f64)> = items.iter().map(|&(id, p)| (id, distance_sq(q, p))).collect();
        all.sort_by(|a, b| a.1.total_cmp(&b.1).then(a.0.cmp(&b.0)));
        all.truncate(k);
        all
    }

    #[test]
    fn empty_tree() {
        assert_eq!(KdTree::new(vec![]).nearest([0.0; 3]), None);
    }

    #[test]
    fn tie_prefers_lower_id() {
        let items: Vec<(usize, Point3)> = (0..40)
            .map(|i| (i, [if i % 2 == 0 { 1.0 } else { -1.0 }, 0.0, 0.0]))
            .collect();
        assert_eq!(KdTree::new(items).nearest([0.0; 3]), Some(0));
    }

    proptest! {
        #[test]
        fn matches_linear_scan(
            pts in prop::collection::vec(prop::array::uniform3(-5i32..5), 1..120),
            queries in prop::collection::vec(prop::array::uniform3(-6i32..6), 1..10),
            k in 1usize..6,
        ) {
            // Integer lattice coordinates force many exact ties.
            let items: Vec<(usize, Point3)> = pts.iter().enumerate()
                .map(|(i, p)| (i * 3 + 1, p.map(f64::from))).collect();
            let tree = KdTree::new(items.clone());
            for q in queries {
                let q = q.map(f64::from);
                prop_assert_eq!(tree.k_nearest(q, k), scan(&items, q, k));
            }
        }
    }
}
