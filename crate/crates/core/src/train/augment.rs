use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::deform::{apply_rbf, sample_rbf_with, RbfConfig, RbfDeformation};
use crate::error::{Error, Result};
use crate::geometry::{apply_rigid, occlude, EulerAngles, PointSet, RigidTransform};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Occlusion {
    #[default]
    None,
    /// Points removed from the source only.
    PartialToFull,
    /// Points removed from source and target, with independent anchors.
    PartialToPartial,
}

impl Occlusion {
    pub fn as_str(&self) -> &'static str {
        match self {
            Occlusion::None => "none",
            Occlusion::PartialToFull => "partial_to_full",
            Occlusion::PartialToPartial => "partial_to_partial",
        }
    }
}

impl std::str::FromStr for Occlusion {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Occlusion::None),
            "partial_to_full" => Ok(Occlusion::PartialToFull),
            "partial_to_partial" => Ok(Occlusion::PartialToPartial),
            _ => Err(Error::Invalid(format!("unknown occlusion mode {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AugmentationConfig {
    pub rot_range_deg: f64,
    pub trans_range: f64,
    pub rbf_sigma_shift: f64,
    pub occlusion: Occlusion,
    pub occlusion_k: usize,
    pub deform: bool,
    pub rbf_grid: usize,
    pub rbf_kernel_width: f64,
}

impl Default for AugmentationConfig {
    fn default() -> Self {
        AugmentationConfig {
            rot_range_deg: 45.0,
            trans_range: 1.0,
            rbf_sigma_shift: 0.1,
            occlusion: Occlusion::None,
            occlusion_k: 512,
            deform: true,
            rbf_grid: 3,
            rbf_kernel_width: 1.0,
        }
    }
}

impl AugmentationConfig {
    /// Rotation and translation only.
    pub fn rigid() -> Self {
        AugmentationConfig {
            deform: false,
            ..Default::default()
        }
    }

    /// No motion, no deformation, no occlusion.
    pub fn identity() -> Self {
        AugmentationConfig {
            rot_range_deg: 0.0,
            trans_range: 0.0,
            rbf_sigma_shift: 0.0,
            deform: false,
            ..Default::default()
        }
    }

    fn rbf_config(&self) -> RbfConfig {
        RbfConfig {
            grid: self.rbf_grid,
            kernel_width: self.rbf_kernel_width,
            sigma_shift: self.rbf_sigma_shift,
            ..RbfConfig::default()
        }
    }
}

/// Everything needed to rebuild a pair from its base shape.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub angles: EulerAngles,
    pub translation: [f64; 3],
    pub deformation: Option<RbfDeformation>,
    pub source_occlusion_seed: Option<u64>,
    pub target_occlusion_seed: Option<u64>,
}

impl GroundTruth {
    /// Rigid motion applied to the source.
    pub fn rigid(&self) -> RigidTransform {
        RigidTransform::from_euler(self.angles, self.translation)
    }

    /// Rigid motion that takes the source back onto the target.
    pub fn alignment(&self) -> RigidTransform {
        self.rigid().inverse()
    }

    pub fn reconstruct_source(&self, base: &PointSet, occlusion_k: usize) -> Result<PointSet> {
        let mut ps = match self.source_occlusion_seed {
            Some(seed) => occlude(base, seed, occlusion_k)?,
            None => base.clone(),
        };
        if let Some(d) = &self.deformation {
            ps = apply_rbf(d, &ps)?;
        }
        Ok(apply_rigid(&ps, &self.rigid()))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct TrainingPair {
    pub source: PointSet,
    pub target: PointSet,
    pub gt: GroundTruth,
}

const NORMALIZED_SLACK: f64 = 1e-6;

/// Builds one (source, target) pair from a normalized base shape.
///
/// The target is the base (occluded in partial-to-partial mode). The source
/// is occluded if requested, then deformed, rotated and translated.
pub fn make_pair(base: &PointSet, cfg: &AugmentationConfig, seed: u64) -> Result<TrainingPair> {
    let limit = 1.0 + NORMALIZED_SLACK;
    if let Some((i, _)) = base
        .iter()
        .enumerate()
        .find(|(_, p)| p.iter().any(|c| c.abs() > limit))
    {
        return Err(Error::Invalid(format!("base point {i} lies outside [-1, 1]^3")));
    }
    if base.is_empty() {
        return Err(Error::Invalid("empty base shape".into()));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let src_occ_seed = rng.next_u64();
    let tgt_occ_seed = rng.next_u64();
    let rbf_seed = rng.next_u64();
    let mut symmetric = |range: f64| range * (2.0 * rng.random::<f64>() - 1.0);
    let angles = EulerAngles::new(
        symmetric(cfg.rot_range_deg),
        symmetric(cfg.rot_range_deg),
        symmetric(cfg.rot_range_deg),
    );
    let translation = [
        symmetric(cfg.trans_range),
        symmetric(cfg.trans_range),
        symmetric(cfg.trans_range),
    ];

    let (source_occlusion_seed, target_occlusion_seed) = match cfg.occlusion {
        Occlusion::None => (None, None),
        Occlusion::PartialToFull => (Some(src_occ_seed), None),
        Occlusion::PartialToPartial => (Some(src_occ_seed), Some(tgt_occ_seed)),
    };
    let target = match target_occlusion_seed {
        Some(s) => occlude(base, s, cfg.occlusion_k)?,
        None => base.clone(),
    };
    let deformation = if cfg.deform {
        Some(sample_rbf_with(&cfg.rbf_config(), rbf_seed)?)
    } else {
        None
    };
    let gt = GroundTruth {
        angles,
        translation,
        deformation,
        source_occlusion_seed,
        target_occlusion_seed,
    };
    let source = gt.reconstruct_source(base, cfg.occlusion_k)?;
    Ok(TrainingPair { source, target, gt })
}
