use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::{Point, PointSet};

/// Rotation angles in degrees about the X, Y and Z axes.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct EulerAngles {
    pub rx: f64,
    pub ry: f64,
    pub rz: f64,
}

impl EulerAngles {
    pub fn new(rx: f64, ry: f64, rz: f64) -> Self {
        EulerAngles { rx, ry, rz }
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.rx, self.ry, self.rz]
    }
}

/// `R = Rz(rz) · Ry(ry) · Rx(rx)`, acting on column vectors.
pub fn euler_to_matrix(a: &EulerAngles) -> Matrix3<f64> {
    let (sx, cx) = a.rx.to_radians().sin_cos();
    let (sy, cy) = a.ry.to_radians().sin_cos();
    let (sz, cz) = a.rz.to_radians().sin_cos();
    let rx = Matrix3::new(1.0, 0.0, 0.0, 0.0, cx, -sx, 0.0, sx, cx);
    let ry = Matrix3::new(cy, 0.0, sy, 0.0, 1.0, 0.0, -sy, 0.0, cy);
    let rz = Matrix3::new(cz, -sz, 0.0, sz, cz, 0.0, 0.0, 0.0, 1.0);
    rz * ry * rx
}

/// Inverse of [`euler_to_matrix`], angles in (−180, 180].
///
/// Unique while |ry| < 90°.
pub fn matrix_to_euler(r: &Matrix3<f64>) -> EulerAngles {
    let ry = (-r[(2, 0)]).clamp(-1.0, 1.0).asin();
    let rx = r[(2, 1)].atan2(r[(2, 2)]);
    let rz = r[(1, 0)].atan2(r[(0, 0)]);
    let wrap = |deg: f64| if deg <= -180.0 { deg + 360.0 } else { deg };
    EulerAngles::new(wrap(rx.to_degrees()), wrap(ry.to_degrees()), wrap(rz.to_degrees()))
}

/// `p ↦ R·p + t`.
#[derive(Clone, Debug, PartialEq)]
pub struct RigidTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
    /// Angles the rotation was built from, when known.
    pub source_angles: Option<EulerAngles>,
}

impl RigidTransform {
    pub fn identity() -> Self {
        RigidTransform {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
            source_angles: Some(EulerAngles::default()),
        }
    }

    pub fn from_euler(angles: EulerAngles, translation: [f64; 3]) -> Self {
        RigidTransform {
            rotation: euler_to_matrix(&angles),
            translation: Vector3::from(translation),
            source_angles: Some(angles),
        }
    }

    pub fn from_parts(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        RigidTransform {
            rotation,
            translation,
            source_angles: None,
        }
    }

    /// Euler angles of the rotation under the `Rz·Ry·Rx` convention.
    pub fn angles(&self) -> EulerAngles {
        matrix_to_euler(&self.rotation)
    }

    pub fn inverse(&self) -> Self {
        let rt = self.rotation.transpose();
        RigidTransform::from_parts(rt, -(rt * self.translation))
    }

    /// `self ∘ first`: apply `first`, then `self`.
    pub fn compose(&self, first: &RigidTransform) -> Self {
        RigidTransform::from_parts(
            self.rotation * first.rotation,
            self.rotation * first.translation + self.translation,
        )
    }

    #[inline]
    pub fn apply_point(&self, p: &Point) -> Point {
        let r = &self.rotation;
        let t = &self.translation;
        [
            r[(0, 0)] * p[0] + r[(0, 1)] * p[1] + r[(0, 2)] * p[2] + t[0],
            r[(1, 0)] * p[0] + r[(1, 1)] * p[1] + r[(1, 2)] * p[2] + t[1],
            r[(2, 0)] * p[0] + r[(2, 1)] * p[1] + r[(2, 2)] * p[2] + t[2],
        ]
    }

    /// Orthonormal with determinant +1, to `tol`.
    pub fn is_proper(&self, tol: f64) -> bool {
        let r = &self.rotation;
        (r.transpose() * r - Matrix3::identity()).abs().max() <= tol && (r.determinant() - 1.0).abs() <= tol
    }
}

pub fn apply_rigid(ps: &PointSet, t: &RigidTransform) -> PointSet {
    PointSet {
        points: ps.iter().map(|p| t.apply_point(p)).collect(),
    }
}

/// Per-axis affine map taking `[min, max]` onto `[−1, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScaleRecord {
    pub min: Point,
    pub max: Point,
}

impl ScaleRecord {
    pub fn from_bounds(min: Point, max: Point) -> Result<Self> {
        for k in 0..3 {
            if (max[k] - min[k]).is_nan() || max[k] - min[k] <= 0.0 {
                return Err(Error::Degenerate(format!("zero extent along axis {k}")));
            }
        }
        Ok(ScaleRecord { min, max })
    }

    /// Multiplier from input units to normalized units, per axis.
    pub fn scale(&self) -> Point {
        [0, 1, 2].map(|k| 2.0 / (self.max[k] - self.min[k]))
    }

    #[inline]
    pub fn apply_point(&self, p: &Point) -> Point {
        [0, 1, 2].map(|k| 2.0 * (p[k] - self.min[k]) / (self.max[k] - self.min[k]) - 1.0)
    }

    #[inline]
    pub fn invert_point(&self, p: &Point) -> Point {
        [0, 1, 2].map(|k| (p[k] + 1.0) * 0.5 * (self.max[k] - self.min[k]) + self.min[k])
    }

    pub fn apply(&self, ps: &PointSet) -> PointSet {
        PointSet {
            points: ps.iter().map(|p| self.apply_point(p)).collect(),
        }
    }

    pub fn invert(&self, ps: &PointSet) -> PointSet {
        PointSet {
            points: ps.iter().map(|p| self.invert_point(p)).collect(),
        }
    }
}

/// Normalizes each axis independently to `[−1, 1]`.
pub fn normalize_to_unit_box(ps: &PointSet) -> Result<(PointSet, ScaleRecord)> {
    let (lo, hi) = ps
        .bounds()
        .ok_or_else(|| Error::Degenerate("empty point set".into()))?;
    let rec = ScaleRecord::from_bounds(lo, hi)?;
    Ok((rec.apply(ps), rec))
}
