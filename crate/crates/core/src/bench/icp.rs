use std::time::Instant;

use crate::error::{Error, Result};
use crate::geometry::{apply_rigid, kabsch, KdTree, PointSet, RigidTransform};

use super::RegistrationResult;

pub const DEFAULT_ICP_ITERATIONS: usize = 10;

fn mean_sq_residual(ps: &PointSet, tree: &KdTree) -> f64 {
    ps.iter().map(|p| tree.nearest(p).1).sum::<f64>() / ps.len() as f64
}

/// Point-to-point ICP with exact nearest-neighbour correspondences.
///
/// `residuals[0]` is the mean squared nearest-neighbour distance before any
/// update and `residuals[k]` the value after iteration `k`. Each iteration
/// refits the accumulated transform from the original source, so error does
/// not compound. A degenerate fit stops early and keeps the best transform
/// found so far.
pub fn icp(source: &PointSet, target: &PointSet, iterations: usize) -> Result<RegistrationResult> {
    if source.is_empty() || target.is_empty() {
        return Err(Error::Invalid("icp needs nonempty source and target".into()));
    }
    let started = Instant::now();
    let tree = KdTree::new(target.points())?;
    let mut total = RigidTransform::identity();
    let mut current = source.clone();
    let mut residuals = vec![mean_sq_residual(&current, &tree)];
    let mut degenerate = false;

    for _ in 0..iterations {
        let matched = PointSet::new(
            current
                .iter()
                .map(|p| target.points()[tree.nearest(p).0])
                .collect(),
        )?;
        let step = match kabsch(&current, &matched) {
            Ok(t) => t,
            Err(Error::Degenerate(_)) => {
                degenerate = true;
                break;
            }
            Err(e) => return Err(e),
        };
        total = step.compose(&total);
        current = apply_rigid(source, &total);
        residuals.push(mean_sq_residual(&current, &tree));
    }

    Ok(RegistrationResult {
        method: "icp".into(),
        transformed_source: current,
        est_rigid: Some(total),
        inference_seconds: started.elapsed().as_secs_f64(),
        residuals,
        degenerate,
    })
}
