use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

use super::{PointSet, RigidTransform};

/// Relative size of the second principal extent below which the source
/// configuration counts as collinear.
const DEGENERACY_TOL: f64 = 1e-10;

/// Least-squares rigid transform taking `src[i]` onto `dst[i]`.
///
/// Reflections are corrected by flipping the axis of the smallest singular
/// value so the result is always a proper rotation.
pub fn kabsch(src: &PointSet, dst: &PointSet) -> Result<RigidTransform> {
    if src.len() != dst.len() {
        return Err(Error::Invalid(format!(
            "kabsch needs paired sets, got {} and {} points",
            src.len(),
            dst.len()
        )));
    }
    if src.len() < 3 {
        return Err(Error::Degenerate(format!("kabsch needs at least 3 points, got {}", src.len())));
    }
    let cs = Vector3::from(src.centroid());
    let cd = Vector3::from(dst.centroid());

    let mut h = Matrix3::<f64>::zeros();
    let mut scatter = Matrix3::<f64>::zeros();
    for (s, d) in src.iter().zip(dst.iter()) {
        let a = Vector3::from(*s) - cs;
        let b = Vector3::from(*d) - cd;
        h += a * b.transpose();
        scatter += a * a.transpose();
    }

    let mut extents = scatter.symmetric_eigenvalues();
    extents
        .as_mut_slice()
        .sort_by(|a, b| b.total_cmp(a));
    if extents[1].is_nan() || extents[1] <= DEGENERACY_TOL * extents[0].max(f64::MIN_POSITIVE) {
        return Err(Error::Degenerate("source points are collinear or coincident".into()));
    }

    let svd = h.svd(true, true);
    let u = svd.u.ok_or_else(|| Error::Degenerate("SVD did not converge".into()))?;
    let v_t = svd.v_t.ok_or_else(|| Error::Degenerate("SVD did not converge".into()))?;
    let v = v_t.transpose();

    // nalgebra does not sort singular values; flip the column of the smallest.
    let smallest = (0..3)
        .min_by(|&a, &b| svd.singular_values[a].total_cmp(&svd.singular_values[b]))
        .unwrap();
    let mut d = Matrix3::identity();
    if (v * u.transpose()).determinant() < 0.0 {
        d[(smallest, smallest)] = -1.0;
    }
    let rotation = v * d * u.transpose();
    let translation = cd - rotation * cs;
    Ok(RigidTransform::from_parts(rotation, translation))
}
