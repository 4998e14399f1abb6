//! Nearest-neighbor and radius queries over point sets.

use std::num::NonZeroUsize;

use kiddo::{ImmutableKdTree, SquaredEuclidean};

use crate::grid::Vec3;

pub struct PointIndex {
    tree: Option<ImmutableKdTree<f64, 3>>,
    len: usize,
}

impl PointIndex {
    pub fn new(points: &[Vec3]) -> Self {
        let coords: Vec<[f64; 3]> = points.iter().map(|p| [p.x, p.y, p.z]).collect();
        let tree = (!coords.is_empty()).then(|| ImmutableKdTree::new_from_slice(&coords));
        Self {
            tree,
            len: points.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    /// Distances and indices of the `k` nearest points, closest first.
    pub fn nearest_k(&self, q: &Vec3, k: usize) -> Vec<(f64, usize)> {
        let (Some(tree), Some(k)) = (&self.tree, NonZeroUsize::new(k)) else {
            return Vec::new();
        };
        tree.nearest_n::<SquaredEuclidean>(&[q.x, q.y, q.z], k)
            .into_iter()
            .map(|n| (n.distance.sqrt(), n.item as usize))
            .collect()
    }

    pub fn nearest(&self, q: &Vec3) -> Option<(f64, usize)> {
        self.nearest_k(q, 1).into_iter().next()
    }

    /// Indices of all points within distance `r` (inclusive), in index order.
    pub fn within(&self, q: &Vec3, r: f64) -> Vec<usize> {
        let Some(tree) = &self.tree else {
            return Vec::new();
        };
        let mut out: Vec<usize> = tree
            .within_unsorted::<SquaredEuclidean>(&[q.x, q.y, q.z], r * r)
            .into_iter()
            .map(|n| n.item as usize)
            .collect();
        out.sort_unstable();
        out
    }
}
