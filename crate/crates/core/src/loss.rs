//! Chamfer distance objectives and their gradients.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{KdTree, Point, PointSet};
use crate::numeric::{NodeId, Scalar, Tape, Tensor};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ChamferMode {
    #[default]
    TwoWay,
    /// Only the source→target term; zero whenever the source is a subset of
    /// the target.
    OneWaySourceToTarget,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ChamferConfig {
    pub mode: ChamferMode,
    pub squared: bool,
}

impl Default for ChamferConfig {
    fn default() -> Self {
        ChamferConfig {
            mode: ChamferMode::TwoWay,
            squared: true,
        }
    }
}

fn check(a: &PointSet, b: &PointSet) -> Result<()> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Invalid(format!(
            "chamfer of empty set ({} vs {} points)",
            a.len(),
            b.len()
        )));
    }
    Ok(())
}

/// Mean over `from` of the distance to its nearest point in `to`, plus the
/// per-`from` assignment.
fn directed(from: &PointSet, to: &PointSet, squared: bool) -> Result<(f64, Vec<usize>)> {
    let tree = KdTree::new(to.points())?;
    let mut sum = 0.0;
    let mut nn = Vec::with_capacity(from.len());
    for q in from.iter() {
        let (j, d2) = tree.nearest(q);
        sum += if squared { d2 } else { d2.sqrt() };
        nn.push(j);
    }
    Ok((sum / from.len() as f64, nn))
}

pub fn chamfer(a: &PointSet, b: &PointSet, cfg: &ChamferConfig) -> Result<f64> {
    Ok(chamfer_with_grad(a, b, cfg)?.0)
}

/// Gradient of [`chamfer`] with respect to the points of `a`, holding the
/// nearest-neighbour assignments fixed.
pub fn chamfer_backward(a: &PointSet, b: &PointSet, cfg: &ChamferConfig) -> Result<Vec<Point>> {
    Ok(chamfer_with_grad(a, b, cfg)?.1)
}

/// `(value, ∂value/∂a)` in one pass.
pub fn chamfer_with_grad(a: &PointSet, b: &PointSet, cfg: &ChamferConfig) -> Result<(f64, Vec<Point>)> {
    check(a, b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let mut grad = vec![[0.0; 3]; a.len()];

    // d/dx of d(x, y) for the configured distance
    let dgrad = |x: &Point, y: &Point| -> Point {
        let diff = [x[0] - y[0], x[1] - y[1], x[2] - y[2]];
        if cfg.squared {
            diff.map(|v| 2.0 * v)
        } else {
            let n = (diff[0] * diff[0] + diff[1] * diff[1] + diff[2] * diff[2]).sqrt();
            if n > 0.0 {
                diff.map(|v| v / n)
            } else {
                [0.0; 3]
            }
        }
    };

    let (forward, nn_ab) = directed(a, b, cfg.squared)?;
    for (i, &j) in nn_ab.iter().enumerate() {
        let g = dgrad(&a.points()[i], &b.points()[j]);
        for k in 0..3 {
            grad[i][k] += g[k] / na;
        }
    }
    let value = match cfg.mode {
        ChamferMode::OneWaySourceToTarget => forward,
        ChamferMode::TwoWay => {
            let (backward, nn_ba) = directed(b, a, cfg.squared)?;
            for (j, &i) in nn_ba.iter().enumerate() {
                let g = dgrad(&a.points()[i], &b.points()[j]);
                for k in 0..3 {
                    grad[i][k] += g[k] / nb;
                }
            }
            forward + backward
        }
    };
    Ok((value, grad))
}

/// Records `chamfer(x, target)` on a tape, `x` being an `N×3` node.
pub fn chamfer_on_tape<T: Scalar>(
    tape: &mut Tape<'_, T>,
    x: NodeId,
    target: &PointSet,
    cfg: &ChamferConfig,
) -> Result<NodeId> {
    let moved = tensor_to_points(tape.value(x))?;
    let (value, grad) = chamfer_with_grad(&moved, target, cfg)?;
    let g = Tensor::new(
        vec![grad.len(), 3],
        grad.iter().flatten().map(|&v| T::from_f64(v)).collect(),
    )?;
    tape.external_scalar(x, T::from_f64(value), g)
}

pub(crate) fn tensor_to_points<T: Scalar>(t: &Tensor<T>) -> Result<PointSet> {
    if t.shape().len() != 2 || t.cols() != 3 {
        return Err(Error::Shape {
            op: "points",
            left: t.shape().to_vec(),
            right: vec![t.rows(), 3],
        });
    }
    PointSet::new(
        t.data()
            .chunks_exact(3)
            .map(|r| [r[0].as_f64(), r[1].as_f64(), r[2].as_f64()])
            .collect(),
    )
}
