//! Exact nearest-neighbour search.

use crate::error::{Error, Result};

use super::{sq_dist, Point, PointSet};

const LEAF_SIZE: usize = 8;

/// Balanced kd-tree over a point set, stored implicitly in one permuted array.
///
/// Queries are exact; equidistant candidates resolve to the smallest
/// original index.
#[derive(Clone, Debug)]
pub struct KdTree {
    pts: Vec<Point>,
    order: Vec<usize>,
    axes: Vec<u8>,
}

impl KdTree {
    pub fn new(points: &[Point]) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::Invalid("nearest-neighbour target is empty".into()));
        }
        let mut order: Vec<usize> = (0..points.len()).collect();
        let mut axes = vec![0u8; points.len()];
        build(points, &mut order, &mut axes, 0);
        let pts = order.iter().map(|&i| points[i]).collect();
        Ok(KdTree { pts, order, axes })
    }

    pub fn len(&self) -> usize {
        self.pts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pts.is_empty()
    }

    /// Index into the original points and squared distance of the closest point.
    pub fn nearest(&self, q: &Point) -> (usize, f64) {
        let mut best = (f64::INFINITY, usize::MAX);
        self.search(q, 0, self.pts.len(), &mut best);
        (best.1, best.0)
    }

    fn consider(&self, q: &Point, i: usize, best: &mut (f64, usize)) {
        let d = sq_dist(q, &self.pts[i]);
        let idx = self.order[i];
        if d < best.0 || (d == best.0 && idx < best.1) {
            *best = (d, idx);
        }
    }

    fn search(&self, q: &Point, lo: usize, hi: usize, best: &mut (f64, usize)) {
        if hi - lo <= LEAF_SIZE {
            for i in lo..hi {
                self.consider(q, i, best);
            }
            return;
        }
        let mid = (lo + hi) / 2;
        let axis = self.axes[mid] as usize;
        self.consider(q, mid, best);
        let diff = q[axis] - self.pts[mid][axis];
        let (near, far) = if diff < 0.0 {
            ((lo, mid), (mid + 1, hi))
        } else {
            ((mid + 1, hi), (lo, mid))
        };
        self.search(q, near.0, near.1, best);
        // `<=` keeps equidistant candidates reachable for index tie-breaking
        if diff * diff <= best.0 {
            self.search(q, far.0, far.1, best);
        }
    }
}

fn build(points: &[Point], order: &mut [usize], axes: &mut [u8], offset: usize) {
    let n = order.len();
    if n <= LEAF_SIZE {
        return;
    }
    let mut lo = [f64::INFINITY; 3];
    let mut hi = [f64::NEG_INFINITY; 3];
    for &i in order.iter() {
        for k in 0..3 {
            lo[k] = lo[k].min(points[i][k]);
            hi[k] = hi[k].max(points[i][k]);
        }
    }
    let axis = (0..3)
        .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
        .unwrap();
    let mid = n / 2;
    order.select_nth_unstable_by(mid, |&a, &b| {
        points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b))
    });
    axes[offset + mid] = axis as u8;
    let (left, rest) = order.split_at_mut(mid);
    build(points, left, axes, offset);
    build(points, &mut rest[1..], axes, offset + mid + 1);
}

/// Exact nearest neighbour in `target` of every point of `query`.
pub fn nearest_neighbors(query: &PointSet, target: &PointSet) -> Result<Vec<(usize, f64)>> {
    let tree = KdTree::new(target.points())?;
    Ok(query.iter().map(|q| tree.nearest(q)).collect())
}
