//! Balanced 3D k-d tree for exact nearest-neighbor queries.
//!
//! The tree is implicit: `order` holds point indices such that for every
//! subrange `[lo, hi)` the median `(lo + hi) / 2` is the node and the two
//! halves are its subtrees, split along `axis[mid]`.

use crate::error::{Error, Result};
use crate::exec::{self, Exec};
use crate::pc_io::PointCloud;

/// Squared distance in `f64`; the metric every NN query in the crate uses.
#[inline]
pub fn dist2(a: &[f32; 3], b: &[f32; 3]) -> f64 {
    let dx = a[0] as f64 - b[0] as f64;
    let dy = a[1] as f64 - b[1] as f64;
    let dz = a[2] as f64 - b[2] as f64;
    dx * dx + dy * dy + dz * dz
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<[f32; 3]>,
    order: Vec<u32>,
    axis: Vec<u8>,
}

impl KdTree {
    pub fn build(cloud: &PointCloud) -> Result<Self> {
        Self::from_points(cloud.points().to_vec())
    }

    pub fn from_points(points: Vec<[f32; 3]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::invalid("cannot build a k-d tree over an empty cloud"));
        }
        if points.len() > u32::MAX as usize {
            return Err(Error::invalid("cloud too large for the k-d tree index"));
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut axis = vec![0u8; points.len()];
        build_rec(&points, &mut order, &mut axis);
        Ok(Self { points, order, axis })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[[f32; 3]] {
        &self.points
    }

    /// Index of the nearest point and its squared distance.
    pub fn nearest(&self, q: &[f32; 3]) -> (usize, f64) {
        let mut best = (usize::MAX, f64::INFINITY);
        self.search(q, 0, self.order.len(), &mut best);
        best
    }

    /// Euclidean NN distance for every query, in query order.
    pub fn nearest_distances(&self, queries: &[[f32; 3]], exec: Exec) -> Vec<f64> {
        exec::map_slice(exec, queries, |q| self.nearest(q).1.sqrt())
    }

    fn search(&self, q: &[f32; 3], lo: usize, hi: usize, best: &mut (usize, f64)) {
        if lo >= hi {
            return;
        }
        let mid = (lo + hi) / 2;
        let idx = self.order[mid] as usize;
        let p = &self.points[idx];
        let d = dist2(q, p);
        if d < best.1 {
            *best = (idx, d);
        }
        let ax = self.axis[mid] as usize;
        let diff = q[ax] as f64 - p[ax] as f64;
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        if diff * diff <= best.1 {
            self.search(q, far.0, far.1, best);
        }
    }
}

fn build_rec(points: &[[f32; 3]], order: &mut [u32], axis: &mut [u8]) {
    if order.len() <= 1 {
        return;
    }
    // split along the widest extent
    let mut lo = [f32::INFINITY; 3];
    let mut hi = [f32::NEG_INFINITY; 3];
    for &i in order.iter() {
        let p = &points[i as usize];
        for k in 0..3 {
            lo[k] = lo[k].min(p[k]);
            hi[k] = hi[k].max(p[k]);
        }
    }
    let ax = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])))
        .unwrap();
    let mid = order.len() / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a as usize][ax].total_cmp(&points[b as usize][ax])
    });
    axis[mid] = ax as u8;
    let (left, right) = order.split_at_mut(mid);
    let (laxis, raxis) = axis.split_at_mut(mid);
    build_rec(points, left, laxis);
    build_rec(points, &mut right[1..], &mut raxis[1..]);
}
