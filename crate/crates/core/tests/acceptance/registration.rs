use fpt::bench::{icp, rigid_from_displacements, rmse_metrics, Pose};
use fpt::geometry::{apply_rigid, EulerAngles, PointSet, RigidTransform};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{ensure, Outcome};

/// Allowed rise between consecutive ICP residuals, relative to the initial
/// residual. Converged runs jitter at the level of f64 round-off.
const RESIDUAL_SLACK: f64 = 1e-12;

fn cube_cloud(rng: &mut ChaCha8Rng, n: usize) -> PointSet {
    PointSet::new((0..n).map(|_| [0; 3].map(|_| rng.random_range(-1.0..1.0))).collect()).unwrap()
}

fn max_angle_error(a: &EulerAngles, b: &EulerAngles) -> f64 {
    a.as_array()
        .iter()
        .zip(b.as_array())
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

pub fn icp_contract() -> Outcome {
    const SEEDS: u64 = 100;
    let (mut recovered, mut monotone) = (0, 0);
    let (mut worst_rot, mut worst_trans, mut worst_rise) = (0.0f64, 0.0f64, 0.0f64);
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let target = cube_cloud(&mut rng, 128);
        let angles = EulerAngles::new(
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
            rng.random_range(-10.0..10.0),
        );
        let translation = [0; 3].map(|_| rng.random_range(-0.1..0.1));
        let motion = RigidTransform::from_euler(angles, translation);
        let source = apply_rigid(&target, &motion);

        let result = icp(&source, &target, 10).map_err(|e| format!("seed {seed}: {e}"))?;
        let est = result.est_rigid.ok_or(format!("seed {seed}: no transform"))?;
        let truth = motion.inverse();
        let rot_err = max_angle_error(&est.angles(), &truth.angles());
        let trans_err = (est.translation - truth.translation).abs().max();
        worst_rot = worst_rot.max(rot_err);
        worst_trans = worst_trans.max(trans_err);
        if rot_err < 1e-6 && trans_err < 1e-9 {
            recovered += 1;
        }

        let r = &result.residuals;
        let slack = RESIDUAL_SLACK * r[0];
        let rise = r.windows(2).map(|w| w[1] - w[0]).fold(f64::MIN, f64::max);
        worst_rise = worst_rise.max(rise);
        if r.windows(2).all(|w| w[1] <= w[0] + slack) {
            monotone += 1;
        }
    }
    ensure!(
        recovered == SEEDS && monotone == SEEDS,
        "recovered {recovered}/{SEEDS} (worst rot {worst_rot:.2e}°, trans {worst_trans:.2e}); monotone {monotone}/{SEEDS}"
    );
    Ok(format!(
        "{recovered}/{SEEDS} exact (worst rot {worst_rot:.1e}°, trans {worst_trans:.1e}); residuals non-increasing on all runs (largest rise {worst_rise:.1e}, slack {RESIDUAL_SLACK:e}·r0)"
    ))
}

pub fn rigid_extraction_contract() -> Outcome {
    const SEEDS: u64 = 200;
    const TOL_DEG: f64 = 1e-6;
    let mut worst: f64 = 0.0;
    for seed in 0..SEEDS {
        let mut rng = ChaCha8Rng::seed_from_u64(500 + seed);
        let source = cube_cloud(&mut rng, 64);
        let angles = EulerAngles::new(
            rng.random_range(-45.0..=45.0),
            rng.random_range(-45.0..=45.0),
            rng.random_range(-45.0..=45.0),
        );
        let translation = [0; 3].map(|_| rng.random_range(-1.0..1.0));
        let moved = apply_rigid(&source, &RigidTransform::from_euler(angles, translation));
        let (t, got) = rigid_from_displacements(&source, &moved).map_err(|e| e.to_string())?;
        worst = worst.max(max_angle_error(&got, &angles));
        let terr = (0..3).map(|k| (t.translation[k] - translation[k]).abs()).fold(0.0, f64::max);
        ensure!(terr < 1e-9, "seed {seed}: translation error {terr:e}");
    }
    ensure!(worst < TOL_DEG, "worst angle error {worst:.3e}° over {SEEDS} motions");

    // one case, error (3°, 0, 0): sqrt(3² / 3) = √3
    let pred = Pose { angles: EulerAngles::new(3.0, 0.0, 0.0), translation: [0.0; 3] };
    let (rmse_r, rmse_t) = rmse_metrics(&[(pred, Pose::default())]).map_err(|e| e.to_string())?;
    let expected = 3.0 / 3f64.sqrt();
    ensure!(
        (rmse_r - expected).abs() < 1e-12 && rmse_t == 0.0,
        "rmse ({rmse_r}, {rmse_t}) for a (3°,0,0) error, expected ({expected}, 0)"
    );
    Ok(format!(
        "{SEEDS} motions within ±45°: worst angle error {worst:.1e}° < {TOL_DEG:e}°; single-case rmse {rmse_r:.3}°"
    ))
}
