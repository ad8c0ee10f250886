//! Spine registration and transverse process angle (TxA) measurement.
//!
//! A generic labeled spine model is deformed onto a reconstruction with a
//! trained network. Landmarks at the lateral ends of each transverse process
//! ride along through the same displacement field, and the TxA is the acute
//! angle between two landmark lines after projection into the coronal plane.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sample_surface, Mesh, Point, PointSet, ScaleRecord};
use crate::net::FptModel;
use crate::numeric::Scalar;
use crate::shapes::cuboid;

#[derive(Clone, Debug, PartialEq)]
pub struct LabeledSpineModel {
    pub surface: PointSet,
    /// Ordered by name.
    pub landmarks: BTreeMap<String, Point>,
    /// Index of the anterior-posterior axis.
    pub ap_axis: usize,
}

impl LabeledSpineModel {
    pub fn new(surface: PointSet, landmarks: BTreeMap<String, Point>, ap_axis: usize) -> Result<Self> {
        if ap_axis > 2 {
            return Err(Error::Invalid(format!("ap_axis must be 0, 1 or 2, got {ap_axis}")));
        }
        let (lo, hi) = surface
            .bounds()
            .ok_or_else(|| Error::Invalid("spine model surface is empty".into()))?;
        const SLACK: f64 = 1e-9;
        for (name, p) in &landmarks {
            if !p.iter().all(|c| c.is_finite()) {
                return Err(Error::NonFinite(format!("landmark {name}")));
            }
            if (0..3).any(|k| p[k] < lo[k] - SLACK || p[k] > hi[k] + SLACK) {
                return Err(Error::Invalid(format!("landmark {name} lies outside the surface bounds")));
            }
        }
        Ok(LabeledSpineModel {
            surface,
            landmarks,
            ap_axis,
        })
    }

    pub fn landmark(&self, name: &str) -> Result<Point> {
        self.landmarks
            .get(name)
            .copied()
            .ok_or_else(|| Error::Invalid(format!("missing landmark {name:?}")))
    }

    /// Left and right transverse-process ends of `vertebra`.
    pub fn process_line(&self, vertebra: &str) -> Result<[Point; 2]> {
        Ok([
            self.landmark(&format!("{vertebra}_left"))?,
            self.landmark(&format!("{vertebra}_right"))?,
        ])
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct LandmarkFile {
    ap_axis: usize,
    #[serde(flatten)]
    points: BTreeMap<String, Point>,
}

/// Parses `{"ap_axis": k, "<name>": [x, y, z], ...}`.
pub fn parse_landmarks(text: &str) -> Result<(BTreeMap<String, Point>, usize)> {
    let f: LandmarkFile = serde_json::from_str(text)?;
    Ok((f.points, f.ap_axis))
}

pub fn format_landmarks(landmarks: &BTreeMap<String, Point>, ap_axis: usize) -> Result<String> {
    Ok(serde_json::to_string_pretty(&LandmarkFile {
        ap_axis,
        points: landmarks.clone(),
    })?)
}

pub fn read_landmarks(path: impl AsRef<Path>) -> Result<(BTreeMap<String, Point>, usize)> {
    let path = path.as_ref();
    parse_landmarks(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Prealign {
    None,
    /// Translate the reconstruction so its centroid matches the model's.
    #[default]
    Centroid,
    /// Centroid alignment followed by an isotropic scale matching the RMS
    /// spread about the centroid.
    CentroidScale,
}

impl std::str::FromStr for Prealign {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "none" => Ok(Prealign::None),
            "centroid" => Ok(Prealign::Centroid),
            "centroid+scale" | "centroid_scale" => Ok(Prealign::CentroidScale),
            _ => Err(Error::Invalid(format!("unknown prealign mode {s:?}"))),
        }
    }
}

fn rms_spread(ps: &PointSet, c: &Point) -> f64 {
    let s: f64 = ps
        .iter()
        .map(|p| (0..3).map(|k| (p[k] - c[k]).powi(2)).sum::<f64>())
        .sum();
    (s / ps.len() as f64).sqrt()
}

fn prealign(model: &PointSet, recon: &PointSet, mode: Prealign) -> Result<PointSet> {
    if mode == Prealign::None {
        return Ok(recon.clone());
    }
    let (cm, cr) = (model.centroid(), recon.centroid());
    let scale = match mode {
        Prealign::CentroidScale => {
            let r = rms_spread(recon, &cr);
            if r == 0.0 {
                return Err(Error::Degenerate("reconstruction has zero spread".into()));
            }
            rms_spread(model, &cm) / r
        }
        _ => 1.0,
    };
    recon.map(|p| std::array::from_fn(|k| cm[k] + scale * (p[k] - cr[k])))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SpineRegistration {
    /// Model surface after deformation, in model coordinates.
    pub surface: PointSet,
    pub landmarks: BTreeMap<String, Point>,
    pub global: Vec<f64>,
    /// Reconstruction after pre-alignment, in model coordinates.
    pub recon: PointSet,
}

/// Deforms `model` onto `recon`.
///
/// The reconstruction is first pre-aligned to the model. Both sets are then
/// normalized with the model surface's unit-box record, so the model lands in
/// `[-1, 1]^3`. Predicted displacements are divided by the per-axis scale and
/// added to the original coordinates, which keeps an identity network exact.
pub fn register_spine<T: Scalar>(
    model: &LabeledSpineModel,
    recon: &PointSet,
    fpt: &FptModel<T>,
    mode: Prealign,
) -> Result<SpineRegistration> {
    if model.surface.is_empty() || recon.is_empty() {
        return Err(Error::Invalid("spine registration needs nonempty point sets".into()));
    }
    let (lo, hi) = model.surface.bounds().unwrap();
    let record = ScaleRecord::from_bounds(lo, hi)?;
    let scale = record.scale();
    let recon = prealign(&model.surface, recon, mode)?;

    let source = record.apply(&model.surface);
    let target = record.apply(&recon);
    let field = fpt.fpt_forward(&source, &target)?;
    let shift = |p: &Point, d: Point| -> Point { std::array::from_fn(|k| p[k] + d[k] / scale[k]) };

    let surface = model
        .surface
        .map_indexed(|i, p| shift(p, field.displacement(i)))?;
    let mut landmarks = BTreeMap::new();
    for (name, p) in &model.landmarks {
        let d = fpt.displacement_at(&record.apply_point(p), &field.global)?;
        landmarks.insert(name.clone(), shift(p, d));
    }
    Ok(SpineRegistration {
        surface,
        landmarks,
        global: field.global.data().iter().map(|v| v.as_f64()).collect(),
        recon,
    })
}

/// Drops the anterior-posterior coordinate, keeping the other two in order.
pub fn project_coronal(p: &Point, ap_axis: usize) -> [f64; 2] {
    match ap_axis {
        0 => [p[1], p[2]],
        1 => [p[0], p[2]],
        _ => [p[0], p[1]],
    }
}

/// Acute angle in degrees between the coronal projections of two lines.
pub fn txa(upper: &[Point; 2], lower: &[Point; 2], ap_axis: usize) -> Result<f64> {
    let dir = |line: &[Point; 2], which: &str| -> Result<[f64; 2]> {
        let a = project_coronal(&line[0], ap_axis);
        let b = project_coronal(&line[1], ap_axis);
        let d = [b[0] - a[0], b[1] - a[1]];
        if d[0] == 0.0 && d[1] == 0.0 {
            return Err(Error::Degenerate(format!("{which} line has zero coronal length")));
        }
        Ok(d)
    };
    let u = dir(upper, "upper")?;
    let v = dir(lower, "lower")?;
    // Same angle as arccos(|u.v| / (|u||v|)), without its loss of precision
    // near 0 degrees.
    let dot = (u[0] * v[0] + u[1] * v[1]).abs();
    let cross = (u[0] * v[1] - u[1] * v[0]).abs();
    Ok(cross.atan2(dot).to_degrees())
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TxaResult {
    pub upper_vertebra: String,
    pub lower_vertebra: String,
    pub upper_line: [Point; 2],
    pub lower_line: [Point; 2],
    pub upper_projected: [[f64; 2]; 2],
    pub lower_projected: [[f64; 2]; 2],
    pub angle_deg: f64,
}

pub fn measure_lines(
    upper_vertebra: &str,
    lower_vertebra: &str,
    upper_line: [Point; 2],
    lower_line: [Point; 2],
    ap_axis: usize,
) -> Result<TxaResult> {
    let angle_deg = txa(&upper_line, &lower_line, ap_axis)?;
    let proj = |l: &[Point; 2]| [project_coronal(&l[0], ap_axis), project_coronal(&l[1], ap_axis)];
    Ok(TxaResult {
        upper_vertebra: upper_vertebra.into(),
        lower_vertebra: lower_vertebra.into(),
        upper_projected: proj(&upper_line),
        lower_projected: proj(&lower_line),
        upper_line,
        lower_line,
        angle_deg,
    })
}

/// Registers the model to `recon` and measures the TxA between two vertebrae.
pub fn measure_case<T: Scalar>(
    model: &LabeledSpineModel,
    recon: &PointSet,
    fpt: &FptModel<T>,
    upper: &str,
    lower: &str,
    mode: Prealign,
) -> Result<TxaResult> {
    model.process_line(upper)?;
    model.process_line(lower)?;
    let reg = register_spine(model, recon, fpt, mode)?;
    let deformed = LabeledSpineModel {
        surface: reg.surface,
        landmarks: reg.landmarks,
        ap_axis: model.ap_axis,
    };
    measure_lines(
        upper,
        lower,
        deformed.process_line(upper)?,
        deformed.process_line(lower)?,
        model.ap_axis,
    )
}

/// Axis roles of the synthetic spine: x lateral, y anterior-posterior,
/// z superior-inferior.
pub const SURROGATE_AP_AXIS: usize = 1;

/// Names of the surrogate vertebrae, top to bottom.
pub fn surrogate_vertebrae() -> Vec<String> {
    (1..=12).map(|i| format!("T{i}")).collect()
}

fn vertebra_height(i: usize) -> f64 {
    0.9 - 0.16 * i as f64
}

/// Synthetic thoracic spine: a body, a spinous process and two transverse
/// processes per vertebra, stacked along z. Landmarks sit at the lateral tips
/// of the transverse processes.
pub fn surrogate_mesh() -> (Mesh, BTreeMap<String, Point>) {
    let mut mesh = Mesh::default();
    let mut landmarks = BTreeMap::new();
    for (i, name) in surrogate_vertebrae().iter().enumerate() {
        let z = vertebra_height(i);
        let w = 1.0 + 0.02 * i as f64;
        mesh.merge(&cuboid([0.0, 0.05, z], [0.1 * w, 0.08 * w, 0.05]));
        mesh.merge(&cuboid([0.0, -0.16, z - 0.02], [0.02, 0.08, 0.025]));
        for (side, sign) in [("left", -1.0), ("right", 1.0)] {
            mesh.merge(&cuboid([sign * 0.17 * w, -0.05, z], [0.09 * w, 0.025, 0.02]));
            landmarks.insert(format!("{name}_{side}"), [sign * 0.24 * w, -0.05, z]);
        }
    }
    (mesh, landmarks)
}

/// Generic labeled model sampled from [`surrogate_mesh`].
pub fn surrogate_model(n: usize, seed: u64) -> Result<LabeledSpineModel> {
    let (mesh, landmarks) = surrogate_mesh();
    LabeledSpineModel::new(sample_surface(&mesh, n, seed)?, landmarks, SURROGATE_AP_AXIS)
}

/// Constant-curvature lateral bend of the vertical axis over `[start, end]`,
/// straight above and below. Each horizontal slice moves rigidly within the
/// coronal plane and turns with the centreline.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpineBend {
    pub start: f64,
    pub end: f64,
    /// Radians per unit height; the sign picks the bend direction.
    pub curvature: f64,
}

impl SpineBend {
    /// A bend between the surrogate's T4 and T10 whose TxA between those two
    /// vertebrae is drawn uniformly from `[min_deg, max_deg]`.
    pub fn sample(seed: u64, min_deg: f64, max_deg: f64) -> Self {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let angle = rng.random_range(min_deg..=max_deg).to_radians();
        let sign = if rng.random::<bool>() { 1.0 } else { -1.0 };
        let (start, end) = (vertebra_height(9) + 0.08, vertebra_height(3) - 0.08);
        SpineBend {
            start,
            end,
            curvature: sign * angle / (end - start),
        }
    }

    fn tangent_angle(&self, s: f64) -> f64 {
        self.curvature * (s.clamp(self.start, self.end) - self.start)
    }

    /// Exact TxA between the slices at heights `a` and `b`.
    pub fn angle_between(&self, a: f64, b: f64) -> f64 {
        (self.tangent_angle(a) - self.tangent_angle(b)).abs().to_degrees()
    }

    /// Coronal position of the centreline at height `s` as (lateral, vertical).
    fn centreline(&self, s: f64) -> [f64; 2] {
        let k = self.curvature;
        let len = self.end - self.start;
        let arc = |t: f64| -> [f64; 2] {
            if k == 0.0 {
                [0.0, self.start + t]
            } else {
                [(1.0 - (k * t).cos()) / k, self.start + (k * t).sin() / k]
            }
        };
        if s <= self.start {
            [0.0, s]
        } else if s <= self.end {
            arc(s - self.start)
        } else {
            let top = arc(len);
            let th = self.tangent_angle(self.end);
            let t = s - self.end;
            [top[0] + t * th.sin(), top[1] + t * th.cos()]
        }
    }

    /// Bends a point given in surrogate axes (x lateral, y AP, z vertical).
    pub fn apply_point(&self, p: &Point) -> Point {
        let c = self.centreline(p[2]);
        let th = self.tangent_angle(p[2]);
        [c[0] + p[0] * th.cos(), p[1], c[1] - p[0] * th.sin()]
    }

    pub fn apply(&self, ps: &PointSet) -> Result<PointSet> {
        ps.map(|p| self.apply_point(p))
    }

    /// Ground-truth TxA between two surrogate vertebrae.
    pub fn surrogate_txa(&self, model: &LabeledSpineModel, upper: &str, lower: &str) -> Result<f64> {
        let u = self.apply_line(&model.process_line(upper)?);
        let l = self.apply_line(&model.process_line(lower)?);
        txa(&u, &l, SURROGATE_AP_AXIS)
    }

    fn apply_line(&self, l: &[Point; 2]) -> [Point; 2] {
        [self.apply_point(&l[0]), self.apply_point(&l[1])]
    }
}

/// Bent surrogate surface, sampled independently of the generic model.
pub fn bent_surrogate(bend: &SpineBend, n: usize, seed: u64) -> Result<PointSet> {
    let (mesh, _) = surrogate_mesh();
    bend.apply(&sample_surface(&mesh, n, seed)?)
}

/// Landmark duplicated into a model surface; used to check that the surface
/// and landmark paths share one displacement field.
pub fn with_landmark_in_surface(model: &LabeledSpineModel, name: &str) -> Result<(LabeledSpineModel, usize)> {
    let p = model.landmark(name)?;
    let mut pts = model.surface.points().to_vec();
    pts.push(p);
    let idx = pts.len() - 1;
    Ok((
        LabeledSpineModel {
            surface: PointSet::new(pts)?,
            landmarks: model.landmarks.clone(),
            ap_axis: model.ap_axis,
        },
        idx,
    ))
}
