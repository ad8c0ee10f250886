use fpt::geometry::{occlude, Point, PointSet};
use fpt::net::{FptArch, FptModel};
use fpt::shapes::TRAIN_PRIMITIVES;
use fpt::spine::{bent_surrogate, measure_case, surrogate_model, txa, Prealign, SpineBend};
use fpt::train::{train, AugmentationConfig, Occlusion, TrainingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::training::{base_shape, DESK_POINTS};
use crate::{ensure, Outcome};

const EPS: f64 = 1e-9;

/// Lines in the x-z (coronal) plane with a fixed AP offset.
fn line(a: [f64; 2], b: [f64; 2], ap: f64) -> [Point; 2] {
    [[a[0], ap, a[1]], [b[0], ap, b[1]]]
}

fn in_plane_motion(l: &[Point; 2], theta: f64, shift: [f64; 2]) -> [Point; 2] {
    let (s, c) = theta.sin_cos();
    l.map(|p| [c * p[0] - s * p[2] + shift[0], p[1], s * p[0] + c * p[2] + shift[1]])
}

pub fn txa_geometry() -> Outcome {
    let angle = |u: &[Point; 2], l: &[Point; 2]| txa(u, l, 1).map_err(|e| e.to_string());
    let base = line([0.0, 0.0], [1.0, 0.0], 0.0);
    let cases = [
        ("parallel", line([0.3, 1.0], [2.0, 1.0], 0.7), 0.0),
        ("perpendicular", line([0.0, 0.0], [0.0, 1.0], -0.2), 90.0),
        ("slope 1 vs 0", line([0.0, 0.0], [1.0, 1.0], 0.4), 45.0),
    ];
    for (name, other, want) in &cases {
        let got = angle(&base, other)?;
        ensure!((got - want).abs() < EPS, "{name}: {got}° instead of {want}°");
    }

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut rnd = || rng.random_range(-2.0..2.0);
    for _ in 0..1000 {
        let u = line([rnd(), rnd()], [rnd(), rnd()], rnd());
        let l = line([rnd(), rnd()], [rnd(), rnd()], rnd());
        let a = angle(&u, &l)?;
        let swapped = angle(&[u[1], u[0]], &[l[1], l[0]])?;
        ensure!((swapped - a).abs() < EPS, "endpoint swap moved {a}° to {swapped}°");
        let (theta, shift) = (rnd() * 3.0, [rnd(), rnd()]);
        let moved = angle(&in_plane_motion(&u, theta, shift), &in_plane_motion(&l, theta, shift))?;
        ensure!((moved - a).abs() < EPS, "in-plane motion moved {a}° to {moved}°");
    }
    Ok("parallel 0°, perpendicular 90°, slope-1 45°; endpoint swap and in-plane rigid motion invariant over 1000 random line pairs (tol 1e-9)".into())
}

/// Surrogate TxA range, taken from the clinical curvatures the method was
/// evaluated on.
const BEND_RANGE_DEG: (f64, f64) = (6.4, 11.5);
const TOLERANCE_DEG: f64 = 5.0;
const BENDS: u64 = 10;
const REQUIRED: usize = 8;

/// The partial-registration model from the benchmark protocol: primitives
/// only, default augmentation, source occluded by a quarter. No spine data
/// is seen in training.
fn spine_training() -> (Vec<PointSet>, TrainingConfig) {
    let data = TRAIN_PRIMITIVES
        .iter()
        .enumerate()
        .map(|(i, s)| base_shape(s, DESK_POINTS, i as u64))
        .collect();
    let augmentation = AugmentationConfig {
        occlusion: Occlusion::PartialToFull,
        occlusion_k: DESK_POINTS / 4,
        ..Default::default()
    };
    let cfg = TrainingConfig {
        batch_size: 8,
        steps: 2000,
        seed: 0,
        augmentation,
        ..Default::default()
    };
    (data, cfg)
}

pub fn spine_end_to_end() -> Outcome {
    let (data, cfg) = spine_training();
    let mut model = FptModel::<f32>::init(FptArch::compact(), cfg.seed).map_err(|e| e.to_string())?;
    train(&mut model, &data, &cfg, |_, _| Ok(())).map_err(|e| e.to_string())?;

    let generic = surrogate_model(DESK_POINTS, 1).map_err(|e| e.to_string())?;
    let mut within = 0;
    let mut cases = Vec::new();
    for seed in 0..BENDS {
        let bend = SpineBend::sample(seed, BEND_RANGE_DEG.0, BEND_RANGE_DEG.1);
        let truth = bend.surrogate_txa(&generic, "T4", "T10").map_err(|e| e.to_string())?;
        let recon = bent_surrogate(&bend, DESK_POINTS, 1000 + seed)
            .and_then(|s| occlude(&s, 2000 + seed, DESK_POINTS / 4))
            .map_err(|e| e.to_string())?;
        let got = measure_case(&generic, &recon, &model, "T4", "T10", Prealign::Centroid)
            .map_err(|e| e.to_string())?
            .angle_deg;
        if (got - truth).abs() <= TOLERANCE_DEG {
            within += 1;
        }
        cases.push(format!("{truth:.1}/{got:.1}"));
    }
    let cases = cases.join(" ");
    ensure!(
        within >= REQUIRED,
        "{within}/{BENDS} bends within {TOLERANCE_DEG}° (need {REQUIRED}); truth/measured: {cases}"
    );
    Ok(format!("{within}/{BENDS} bends within {TOLERANCE_DEG}°; truth/measured: {cases}"))
}
