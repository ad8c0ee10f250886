//! ICP baseline, rigid-parameter extraction, error metrics and the
//! benchmark runner.

mod icp;

pub use icp::{icp, DEFAULT_ICP_ITERATIONS};

use std::path::Path;
use std::time::Instant;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{kabsch, EulerAngles, PointSet, RigidTransform};
use crate::net::FptModel;
use crate::train::{make_pair, AugmentationConfig, Occlusion};

#[derive(Clone, Debug, PartialEq)]
pub struct RegistrationResult {
    pub method: String,
    pub transformed_source: PointSet,
    pub est_rigid: Option<RigidTransform>,
    pub inference_seconds: f64,
    /// Mean squared nearest-neighbour residual per iteration (ICP only).
    pub residuals: Vec<f64>,
    pub degenerate: bool,
}

/// Runs one FPT forward pass and moves the source along the predicted field.
pub fn fpt_register(model: &FptModel<f32>, source: &PointSet, target: &PointSet) -> Result<RegistrationResult> {
    let started = Instant::now();
    let field = model.fpt_forward(source, target)?;
    let transformed_source = field.apply(source)?;
    Ok(RegistrationResult {
        method: "fpt".into(),
        transformed_source,
        est_rigid: None,
        inference_seconds: started.elapsed().as_secs_f64(),
        residuals: Vec::new(),
        degenerate: false,
    })
}

/// Rotation angles and translation of a rigid motion.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Pose {
    pub angles: EulerAngles,
    pub translation: [f64; 3],
}

impl From<&RigidTransform> for Pose {
    fn from(t: &RigidTransform) -> Self {
        Pose {
            angles: t.angles(),
            translation: t.translation.into(),
        }
    }
}

/// Best-fit rigid motion between index-paired point sets, with its angles.
pub fn rigid_from_displacements(source: &PointSet, transformed: &PointSet) -> Result<(RigidTransform, EulerAngles)> {
    let t = kabsch(source, transformed)?;
    let angles = t.angles();
    Ok((t, angles))
}

/// Signed angle difference in degrees, wrapped to (−180, 180].
fn angle_diff(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(360.0);
    if d > 180.0 {
        d - 360.0
    } else {
        d
    }
}

/// Per-axis RMSE over `(predicted, ground truth)` cases: rotation in degrees
/// and translation in model units.
pub fn rmse_metrics(cases: &[(Pose, Pose)]) -> Result<(f64, f64)> {
    if cases.is_empty() {
        return Err(Error::Invalid("rmse over zero cases".into()));
    }
    let (mut sr, mut st) = (0.0, 0.0);
    for (pred, gt) in cases {
        let (pa, ga) = (pred.angles.as_array(), gt.angles.as_array());
        for k in 0..3 {
            sr += angle_diff(pa[k], ga[k]).powi(2);
            st += (pred.translation[k] - gt.translation[k]).powi(2);
        }
    }
    let n = 3.0 * cases.len() as f64;
    Ok(((sr / n).sqrt(), (st / n).sqrt()))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Transformation {
    Rigid,
    NonRigid,
}

impl Transformation {
    pub fn as_str(&self) -> &'static str {
        match self {
            Transformation::Rigid => "rigid",
            Transformation::NonRigid => "non_rigid",
        }
    }
}

impl std::str::FromStr for Transformation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rigid" => Ok(Transformation::Rigid),
            "nonrigid" | "non_rigid" | "non-rigid" => Ok(Transformation::NonRigid),
            _ => Err(Error::Invalid(format!("unknown protocol {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkConfig {
    pub transformation: Transformation,
    pub augmentation: AugmentationConfig,
    pub seed: u64,
    pub icp_iterations: usize,
    /// Test pairs drawn per shape.
    pub pairs_per_shape: usize,
}

impl BenchmarkConfig {
    pub fn new(transformation: Transformation, occlusion: Occlusion, seed: u64) -> Self {
        let base = match transformation {
            Transformation::Rigid => AugmentationConfig::rigid(),
            Transformation::NonRigid => AugmentationConfig::default(),
        };
        BenchmarkConfig {
            transformation,
            augmentation: AugmentationConfig { occlusion, ..base },
            seed,
            icp_iterations: DEFAULT_ICP_ITERATIONS,
            pairs_per_shape: 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRow {
    pub method: String,
    pub transformation: Transformation,
    pub occlusion: Occlusion,
    pub mean_seconds: f64,
    pub rmse_r_deg: f64,
    pub rmse_t: f64,
    pub n_cases: usize,
    pub errors: usize,
}

pub const REPORT_HEADER: &str = "method,transformation,occlusion,time_s,rmse_r_deg,rmse_t,n_cases,errors";

struct CaseOutcome {
    pose: Pose,
    seconds: f64,
}

fn evaluate(
    method: &str,
    models: &[(String, FptModel<f32>)],
    source: &PointSet,
    target: &PointSet,
    icp_iterations: usize,
) -> Result<CaseOutcome> {
    let result = match models.iter().find(|(name, _)| name == method) {
        Some((_, model)) => fpt_register(model, source, target)?,
        None => icp(source, target, icp_iterations)?,
    };
    if result.degenerate {
        return Err(Error::Degenerate(format!("{method} fit degenerated")));
    }
    let rigid = match result.est_rigid {
        Some(t) => t,
        None => rigid_from_displacements(source, &result.transformed_source)?.0,
    };
    Ok(CaseOutcome {
        pose: Pose::from(&rigid),
        seconds: result.inference_seconds,
    })
}

/// Evaluates every FPT model and ICP on pairs built from `shapes`.
///
/// The ground truth for a pair is the inverse of the rigid motion applied to
/// its source. FPT rigid parameters are read off its output by Kabsch between
/// the source and the moved source. Failed cases are counted in `errors` and
/// left out of the RMSE.
pub fn run_benchmark(
    models: &[(String, FptModel<f32>)],
    shapes: &[PointSet],
    cfg: &BenchmarkConfig,
) -> Result<Vec<MetricsRow>> {
    if shapes.is_empty() {
        return Err(Error::Invalid("benchmark needs at least one test shape".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let jobs: Vec<(usize, u64)> = (0..cfg.pairs_per_shape)
        .flat_map(|_| 0..shapes.len())
        .map(|s| (s, rng.next_u64()))
        .collect();
    let pairs: Vec<Result<(PointSet, PointSet, Pose)>> = jobs
        .par_iter()
        .map(|&(s, seed)| {
            let pair = make_pair(&shapes[s], &cfg.augmentation, seed)?;
            let gt = Pose::from(&pair.gt.alignment());
            Ok((pair.source, pair.target, gt))
        })
        .collect();

    let mut methods: Vec<String> = models.iter().map(|(n, _)| n.clone()).collect();
    methods.push("icp".into());
    let mut rows = Vec::with_capacity(methods.len());
    for method in methods {
        let outcomes: Vec<Result<(CaseOutcome, Pose)>> = pairs
            .par_iter()
            .map(|p| {
                let (source, target, gt) = p.as_ref().map_err(|e| Error::Invalid(e.to_string()))?;
                Ok((evaluate(&method, models, source, target, cfg.icp_iterations)?, *gt))
            })
            .collect();
        let mut cases = Vec::new();
        let mut seconds = 0.0;
        let mut errors = 0;
        for o in outcomes {
            match o {
                Ok((c, gt)) => {
                    seconds += c.seconds;
                    cases.push((c.pose, gt));
                }
                Err(_) => errors += 1,
            }
        }
        let (rmse_r_deg, rmse_t) = if cases.is_empty() {
            (f64::NAN, f64::NAN)
        } else {
            rmse_metrics(&cases)?
        };
        rows.push(MetricsRow {
            method,
            transformation: cfg.transformation,
            occlusion: cfg.augmentation.occlusion,
            mean_seconds: seconds / cases.len().max(1) as f64,
            rmse_r_deg,
            rmse_t,
            n_cases: cases.len(),
            errors,
        });
    }
    Ok(rows)
}

pub fn format_report(rows: &[MetricsRow]) -> String {
    let mut out = format!("{REPORT_HEADER}\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{:.6},{:.6},{:.6},{},{}\n",
            r.method,
            r.transformation.as_str(),
            r.occlusion.as_str(),
            r.mean_seconds,
            r.rmse_r_deg,
            r.rmse_t,
            r.n_cases,
            r.errors
        ));
    }
    out
}

pub fn write_report(path: impl AsRef<Path>, rows: &[MetricsRow]) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, format_report(rows)).map_err(|e| Error::io(path, e))
}
