//! Gaussian radial basis function deformations.
//!
//! Control points sit on a regular grid over `[−1, 1]³`. Each control point
//! gets a random shift, and the RBF weights are solved so that the field
//! reproduces those shifts exactly at the controls.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{sq_dist, Point, PointSet};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RbfConfig {
    /// Control points per axis.
    pub grid: usize,
    pub kernel_width: f64,
    pub sigma_shift: f64,
    pub regularization: f64,
}

impl Default for RbfConfig {
    fn default() -> Self {
        RbfConfig {
            grid: 3,
            kernel_width: 1.0,
            sigma_shift: 0.1,
            regularization: 1e-10,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RbfDeformation {
    pub controls: Vec<Point>,
    pub shifts: Vec<Point>,
    pub weights: Vec<Point>,
    pub kernel_width: f64,
}

#[inline]
fn kernel(d2: f64, width: f64) -> f64 {
    (-d2 / (2.0 * width * width)).exp()
}

/// Solves `K·W = shifts` with `K_ij = exp(−‖c_i − c_j‖² / 2σ²)`.
pub fn fit_rbf(controls: Vec<Point>, shifts: Vec<Point>, kernel_width: f64) -> Result<RbfDeformation> {
    fit_rbf_regularized(controls, shifts, kernel_width, RbfConfig::default().regularization)
}

pub fn fit_rbf_regularized(
    controls: Vec<Point>,
    shifts: Vec<Point>,
    kernel_width: f64,
    regularization: f64,
) -> Result<RbfDeformation> {
    if kernel_width.is_nan() || kernel_width <= 0.0 {
        return Err(Error::Invalid(format!("kernel width must be positive, got {kernel_width}")));
    }
    if controls.len() != shifts.len() {
        return Err(Error::Invalid(format!(
            "{} controls but {} shifts",
            controls.len(),
            shifts.len()
        )));
    }
    let m = controls.len();
    for i in 0..m {
        for j in 0..i {
            if controls[i] == controls[j] {
                return Err(Error::Degenerate(format!("control points {j} and {i} coincide")));
            }
        }
    }
    if shifts.iter().flatten().all(|&s| s == 0.0) {
        return Ok(RbfDeformation {
            weights: vec![[0.0; 3]; m],
            controls,
            shifts,
            kernel_width,
        });
    }

    let k = DMatrix::from_fn(m, m, |i, j| {
        kernel(sq_dist(&controls[i], &controls[j]), kernel_width) + if i == j { regularization } else { 0.0 }
    });
    let chol = k
        .cholesky()
        .ok_or_else(|| Error::Degenerate("RBF kernel matrix is not positive definite".into()))?;
    let mut weights = vec![[0.0; 3]; m];
    for axis in 0..3 {
        let rhs = DVector::from_iterator(m, shifts.iter().map(|s| s[axis]));
        let w = chol.solve(&rhs);
        if w.iter().any(|v| !v.is_finite()) {
            return Err(Error::Degenerate("RBF system is ill-conditioned".into()));
        }
        for (dst, v) in weights.iter_mut().zip(w.iter()) {
            dst[axis] = *v;
        }
    }
    Ok(RbfDeformation {
        controls,
        shifts,
        weights,
        kernel_width,
    })
}

/// `grid³` control points evenly spaced over `[−1, 1]³`.
pub fn control_grid(grid: usize) -> Vec<Point> {
    let coord = |i: usize| {
        if grid == 1 {
            0.0
        } else {
            -1.0 + 2.0 * i as f64 / (grid - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(grid * grid * grid);
    for i in 0..grid {
        for j in 0..grid {
            for k in 0..grid {
                out.push([coord(i), coord(j), coord(k)]);
            }
        }
    }
    out
}

/// Random deformation on the default grid with i.i.d. `N(0, sigma_shift²)`
/// shifts per coordinate.
pub fn sample_rbf(seed: u64, sigma_shift: f64) -> Result<RbfDeformation> {
    sample_rbf_with(
        &RbfConfig {
            sigma_shift,
            ..RbfConfig::default()
        },
        seed,
    )
}

pub fn sample_rbf_with(cfg: &RbfConfig, seed: u64) -> Result<RbfDeformation> {
    if cfg.grid == 0 {
        return Err(Error::Invalid("RBF grid needs at least one control per axis".into()));
    }
    let controls = control_grid(cfg.grid);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let shifts = controls
        .iter()
        .map(|_| {
            [0; 3].map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                cfg.sigma_shift * z
            })
        })
        .collect();
    fit_rbf_regularized(controls, shifts, cfg.kernel_width, cfg.regularization)
}

impl RbfDeformation {
    pub fn is_identity(&self) -> bool {
        self.weights.iter().flatten().all(|&w| w == 0.0)
    }

    pub fn displacement(&self, p: &Point) -> Point {
        let mut d = [0.0; 3];
        for (c, w) in self.controls.iter().zip(&self.weights) {
            let k = kernel(sq_dist(p, c), self.kernel_width);
            for a in 0..3 {
                d[a] += w[a] * k;
            }
        }
        d
    }

    pub fn apply_point(&self, p: &Point) -> Point {
        let d = self.displacement(p);
        [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
    }

    /// Upper bound on the Lipschitz constant of the displacement field.
    pub fn lipschitz_bound(&self) -> f64 {
        let sum: f64 = self
            .weights
            .iter()
            .map(|w| (w[0] * w[0] + w[1] * w[1] + w[2] * w[2]).sqrt())
            .sum();
        sum / (self.kernel_width * std::f64::consts::E.sqrt())
    }
}

pub fn apply_rbf(def: &RbfDeformation, ps: &PointSet) -> Result<PointSet> {
    ps.map(|p| def.apply_point(p))
}
