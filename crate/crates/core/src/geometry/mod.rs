//! Point sets, meshes and the rigid-geometry toolkit around them.

mod kabsch;
mod nn;
mod off;
mod pointio;
mod sampling;
mod transform;

pub use kabsch::kabsch;
pub use nn::{nearest_neighbors, KdTree};
pub use off::{parse_off, write_off};
pub use pointio::{format_points, parse_points, read_points, write_points};
pub use sampling::{occlude, occlude_indices, sample_surface};
pub use transform::{
    apply_rigid, euler_to_matrix, matrix_to_euler, normalize_to_unit_box, EulerAngles, RigidTransform,
    ScaleRecord,
};

use crate::error::{Error, Result};

pub type Point = [f64; 3];

#[inline]
pub fn sq_dist(a: &Point, b: &Point) -> f64 {
    let dx = a[0] - b[0];
    let dy = a[1] - b[1];
    let dz = a[2] - b[2];
    dx * dx + dy * dy + dz * dz
}

/// Ordered list of finite 3D points. Index `i` of a transformed set
/// corresponds to index `i` of the set it came from.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct PointSet {
    points: Vec<Point>,
}

impl PointSet {
    pub fn new(points: Vec<Point>) -> Result<Self> {
        if let Some(i) = points.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::NonFinite(format!("point {i}")));
        }
        Ok(PointSet { points })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[Point] {
        &self.points
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Point> {
        self.points.iter()
    }

    pub fn into_points(self) -> Vec<Point> {
        self.points
    }

    pub fn centroid(&self) -> Point {
        let n = self.points.len().max(1) as f64;
        let mut c = [0.0; 3];
        for p in &self.points {
            for k in 0..3 {
                c[k] += p[k];
            }
        }
        c.map(|v| v / n)
    }

    /// Per-axis `(min, max)` corners; `None` when empty.
    pub fn bounds(&self) -> Option<(Point, Point)> {
        let first = *self.points.first()?;
        let (mut lo, mut hi) = (first, first);
        for p in &self.points[1..] {
            for k in 0..3 {
                lo[k] = lo[k].min(p[k]);
                hi[k] = hi[k].max(p[k]);
            }
        }
        Some((lo, hi))
    }

    pub fn select(&self, indices: &[usize]) -> PointSet {
        PointSet {
            points: indices.iter().map(|&i| self.points[i]).collect(),
        }
    }

    /// Applies `f` to every point, keeping order.
    pub fn map(&self, f: impl FnMut(&Point) -> Point) -> Result<PointSet> {
        PointSet::new(self.points.iter().map(f).collect())
    }

    pub fn map_indexed(&self, mut f: impl FnMut(usize, &Point) -> Point) -> Result<PointSet> {
        PointSet::new(self.points.iter().enumerate().map(|(i, p)| f(i, p)).collect())
    }

    pub fn translated(&self, t: Point) -> PointSet {
        PointSet {
            points: self
                .points
                .iter()
                .map(|p| [p[0] + t[0], p[1] + t[1], p[2] + t[2]])
                .collect(),
        }
    }
}

impl From<PointSet> for Vec<Point> {
    fn from(ps: PointSet) -> Self {
        ps.points
    }
}

/// Triangle mesh. Polygons are fan-triangulated on load.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Mesh {
    pub vertices: Vec<Point>,
    pub faces: Vec<[usize; 3]>,
}

impl Mesh {
    pub fn new(vertices: Vec<Point>, faces: Vec<[usize; 3]>) -> Result<Self> {
        let n = vertices.len();
        if let Some(f) = faces.iter().find(|f| f.iter().any(|&i| i >= n)) {
            return Err(Error::Invalid(format!("face {f:?} indexes past {n} vertices")));
        }
        if vertices.iter().flatten().any(|c| !c.is_finite()) {
            return Err(Error::NonFinite("mesh vertex".into()));
        }
        Ok(Mesh { vertices, faces })
    }

    pub fn triangle_area(&self, face: usize) -> f64 {
        let [a, b, c] = self.faces[face].map(|i| self.vertices[i]);
        let u = [b[0] - a[0], b[1] - a[1], b[2] - a[2]];
        let v = [c[0] - a[0], c[1] - a[1], c[2] - a[2]];
        let cx = u[1] * v[2] - u[2] * v[1];
        let cy = u[2] * v[0] - u[0] * v[2];
        let cz = u[0] * v[1] - u[1] * v[0];
        0.5 * (cx * cx + cy * cy + cz * cz).sqrt()
    }

    pub fn total_area(&self) -> f64 {
        (0..self.faces.len()).map(|f| self.triangle_area(f)).sum()
    }

    /// Appends `other`, re-indexing its faces.
    pub fn merge(&mut self, other: &Mesh) {
        let base = self.vertices.len();
        self.vertices.extend_from_slice(&other.vertices);
        self.faces
            .extend(other.faces.iter().map(|f| f.map(|i| i + base)));
    }
}
