//! Exact nearest-neighbor search over 3-D points.
//!
//! A median-split kd-tree with a brute-force contract: queries return exactly
//! the argmin-by-distance point (ties resolved toward the lower index), which
//! the tests check against a naive scan.

use crate::geometry::Vec3;
use crate::Real;

#[derive(Debug, Clone)]
struct Node {
    /// Index into the point storage.
    point: usize,
    axis: usize,
    left: Option<usize>,
    right: Option<usize>,
}

/// Immutable exact-NN index; shareable across threads once built.
#[derive(Debug, Clone)]
pub struct KdTree<T> {
    points: Vec<Vec3<T>>,
    nodes: Vec<Node>,
    root: Option<usize>,
}

impl<T: Real> KdTree<T> {
    pub fn build(points: &[Vec3<T>]) -> Self {
        let mut indices: Vec<usize> = (0..points.len()).collect();
        let mut nodes = Vec::with_capacity(points.len());
        let root = Self::build_rec(points, &mut indices[..], 0, &mut nodes);
        KdTree {
            points: points.to_vec(),
            nodes,
            root,
        }
    }

    fn build_rec(
        points: &[Vec3<T>],
        indices: &mut [usize],
        depth: usize,
        nodes: &mut Vec<Node>,
    ) -> Option<usize> {
        if indices.is_empty() {
            return None;
        }
        let axis = depth % 3;
        let coord = |i: usize| -> T {
            let p = &points[i];
            match axis {
                0 => p.x,
                1 => p.y,
                _ => p.z,
            }
        };
        // Sort by (coordinate, index) so construction is fully deterministic.
        indices.sort_by(|&a, &b| coord(a).partial_cmp(&coord(b)).unwrap().then(a.cmp(&b)));
        let mid = indices.len() / 2;
        let point = indices[mid];
        let slot = nodes.len();
        nodes.push(Node {
            point,
            axis,
            left: None,
            right: None,
        });
        let (lo, rest) = indices.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = Self::build_rec(points, lo, depth + 1, nodes);
        let right = Self::build_rec(points, hi, depth + 1, nodes);
        nodes[slot].left = left;
        nodes[slot].right = right;
        Some(slot)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Exact nearest neighbor: `(index, squared distance)`. Ties in distance
    /// go to the lower point index.
    pub fn nearest(&self, query: &Vec3<T>) -> Option<(usize, T)> {
        let root = self.root?;
        let mut best: Option<(usize, T)> = None;
        self.search(root, query, &mut best);
        best
    }

    /// Nearest neighbor within `radius` (inclusive), if any.
    pub fn nearest_within(&self, query: &Vec3<T>, radius: T) -> Option<(usize, T)> {
        self.nearest(query).filter(|&(_, d2)| d2 <= radius * radius)
    }

    fn search(&self, node_idx: usize, query: &Vec3<T>, best: &mut Option<(usize, T)>) {
        let node = &self.nodes[node_idx];
        let p = &self.points[node.point];
        let d2 = (*p - *query).norm_squared();
        let better = match best {
            None => true,
            Some((bi, bd)) => d2 < *bd || (d2 == *bd && node.point < *bi),
        };
        if better {
            *best = Some((node.point, d2));
        }

        let qc = match node.axis {
            0 => query.x,
            1 => query.y,
            _ => query.z,
        };
        let pc = match node.axis {
            0 => p.x,
            1 => p.y,
            _ => p.z,
        };
        let diff = qc - pc;
        let (near, far) = if diff < T::zero() {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if let Some(n) = near {
            self.search(n, query, best);
        }
        // Visit the far side when the splitting plane may still hide a point
        // at least as close (<=, so equal-distance ties can find the lower index).
        if let Some(f) = far {
            let plane_d2 = diff * diff;
            if best.is_none_or(|(_, bd)| plane_d2 <= bd) {
                self.search(f, query, best);
            }
        }
    }
}
