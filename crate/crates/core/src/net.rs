//! The Free Point Transformer network.
//!
//! One per-point MLP followed by a max-pool turns a point set into a global
//! feature. The same weights encode source and target; the two features are
//! concatenated and, together with each source point's coordinates, drive a
//! second MLP that predicts that point's displacement.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, PointSet};
use crate::numeric::ops::{conditioned_linear_forward, linear_forward, maxpool_points, relu_forward};
use crate::numeric::{NodeId, ParamId, ParamStore, Scalar, Tape, Tensor};

/// Layer widths. The feature extractor starts at 3 (xyz); the point
/// transformer's input is `3 + 2·feature_out` and its output is 3.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FptArch {
    pub feature_widths: Vec<usize>,
    pub transformer_hidden: Vec<usize>,
}

impl Default for FptArch {
    fn default() -> Self {
        FptArch {
            feature_widths: vec![3, 64, 128, 1024],
            transformer_hidden: vec![1024, 512, 256, 128],
        }
    }
}

impl FptArch {
    /// Narrow variant for single-CPU training runs.
    pub fn compact() -> Self {
        FptArch {
            feature_widths: vec![3, 32, 64, 128],
            transformer_hidden: vec![128, 64, 32],
        }
    }

    pub fn feature_dim(&self) -> usize {
        *self.feature_widths.last().unwrap_or(&0)
    }

    pub fn global_dim(&self) -> usize {
        2 * self.feature_dim()
    }

    pub fn validate(&self) -> Result<()> {
        if self.feature_widths.len() < 2 || self.feature_widths[0] != 3 {
            return Err(Error::Invalid(format!(
                "feature widths must start at 3 and have at least one layer: {:?}",
                self.feature_widths
            )));
        }
        if self.feature_widths.iter().chain(&self.transformer_hidden).any(|&w| w == 0) {
            return Err(Error::Invalid("zero layer width".into()));
        }
        Ok(())
    }

    fn feature_layers(&self) -> Vec<(usize, usize)> {
        self.feature_widths.windows(2).map(|w| (w[0], w[1])).collect()
    }

    fn transformer_layers(&self) -> Vec<(usize, usize)> {
        let mut widths = vec![3 + self.global_dim()];
        widths.extend(&self.transformer_hidden);
        widths.push(3);
        widths.windows(2).map(|w| (w[0], w[1])).collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FptModel<T> {
    pub arch: FptArch,
    pub seed: u64,
    pub params: ParamStore<T>,
    feature: Vec<(ParamId, ParamId)>,
    transformer: Vec<(ParamId, ParamId)>,
}

/// Per-source-point displacements and the global feature they were
/// conditioned on.
#[derive(Clone, Debug, PartialEq)]
pub struct DisplacementField<T> {
    /// `N×3`, row `i` belongs to source point `i`.
    pub displacements: Tensor<T>,
    /// Concatenated source and target features.
    pub global: Tensor<T>,
}

impl<T: Scalar> DisplacementField<T> {
    pub fn displacement(&self, i: usize) -> Point {
        let r = self.displacements.row(i);
        [r[0].as_f64(), r[1].as_f64(), r[2].as_f64()]
    }

    /// `source + displacement`, index-aligned.
    pub fn apply(&self, source: &PointSet) -> Result<PointSet> {
        if source.len() != self.displacements.rows() {
            return Err(Error::Shape {
                op: "DisplacementField::apply",
                left: vec![source.len(), 3],
                right: self.displacements.shape().to_vec(),
            });
        }
        source.map_indexed(|i, p| {
            let d = self.displacement(i);
            [p[0] + d[0], p[1] + d[1], p[2] + d[2]]
        })
    }
}

pub fn points_to_tensor<T: Scalar>(ps: &PointSet) -> Tensor<T> {
    Tensor::new(
        vec![ps.len(), 3],
        ps.iter().flatten().map(|&v| T::from_f64(v)).collect(),
    )
    .expect("N×3")
}

/// Tape nodes produced by [`FptModel::forward_on_tape`].
#[derive(Clone, Copy, Debug)]
pub struct ForwardNodes {
    pub source: NodeId,
    pub displacement: NodeId,
    pub moved: NodeId,
    pub global: NodeId,
}

/// Fresh model with default widths.
pub fn init_model(seed: u64) -> FptModel<f32> {
    FptModel::init(FptArch::default(), seed).expect("default architecture is valid")
}

impl<T: Scalar> FptModel<T> {
    /// Weights uniform in `±√(1/fan_in)`, biases zero, and an all-zero last
    /// layer so the untrained network is the identity map.
    pub fn init(arch: FptArch, seed: u64) -> Result<Self> {
        arch.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamStore::new();
        let mut feature = Vec::new();
        for (i, (din, dout)) in arch.feature_layers().into_iter().enumerate() {
            let w = uniform_weights(&mut rng, din, dout);
            let wid = params.add(format!("feature.{i}.weight"), w)?;
            let bid = params.add(format!("feature.{i}.bias"), Tensor::zeros(&[dout]))?;
            feature.push((wid, bid));
        }
        let layers = arch.transformer_layers();
        let last = layers.len() - 1;
        let mut transformer = Vec::new();
        for (i, (din, dout)) in layers.into_iter().enumerate() {
            let w = if i == last {
                Tensor::zeros(&[din, dout])
            } else {
                uniform_weights(&mut rng, din, dout)
            };
            let wid = params.add(format!("transformer.{i}.weight"), w)?;
            let bid = params.add(format!("transformer.{i}.bias"), Tensor::zeros(&[dout]))?;
            transformer.push((wid, bid));
        }
        Ok(FptModel {
            arch,
            seed,
            params,
            feature,
            transformer,
        })
    }

    /// Rebuilds a model around an existing parameter store, checking that
    /// every expected parameter is present with the right shape.
    pub fn from_params(arch: FptArch, seed: u64, params: ParamStore<T>) -> Result<Self> {
        let reference = FptModel::<T>::init(arch.clone(), 0)?;
        if reference.params.len() != params.len() {
            return Err(Error::Invalid(format!(
                "expected {} parameters, found {}",
                reference.params.len(),
                params.len()
            )));
        }
        let lookup = |id: ParamId| -> Result<ParamId> {
            let expected = reference.params.get(id);
            let found = params
                .find(&expected.name)
                .ok_or_else(|| Error::Invalid(format!("missing parameter {:?}", expected.name)))?;
            if params.value(found).shape() != expected.value.shape() {
                return Err(Error::Shape {
                    op: "from_params",
                    left: expected.value.shape().to_vec(),
                    right: params.value(found).shape().to_vec(),
                });
            }
            Ok(found)
        };
        let remap = |layers: &[(ParamId, ParamId)]| -> Result<Vec<(ParamId, ParamId)>> {
            layers.iter().map(|&(w, b)| Ok((lookup(w)?, lookup(b)?))).collect()
        };
        Ok(FptModel {
            feature: remap(&reference.feature)?,
            transformer: remap(&reference.transformer)?,
            arch,
            seed,
            params,
        })
    }

    pub fn cast<U: Scalar>(&self) -> FptModel<U> {
        FptModel {
            arch: self.arch.clone(),
            seed: self.seed,
            params: self.params.cast(),
            feature: self.feature.clone(),
            transformer: self.transformer.clone(),
        }
    }

    pub fn feature_layer_ids(&self) -> &[(ParamId, ParamId)] {
        &self.feature
    }

    pub fn transformer_layer_ids(&self) -> &[(ParamId, ParamId)] {
        &self.transformer
    }

    /// Shared per-point MLP followed by a max over points.
    pub fn extract_global_feature(&self, ps: &PointSet) -> Result<Tensor<T>> {
        if ps.is_empty() {
            return Err(Error::Invalid("global feature of an empty point set".into()));
        }
        let mut h = points_to_tensor(ps);
        let n = self.feature.len();
        for (i, &(w, b)) in self.feature.iter().enumerate() {
            h = linear_forward(&h, self.params.value(w), self.params.value(b))?;
            if i + 1 < n {
                h = relu_forward(&h);
            }
        }
        Ok(maxpool_points(&h)?.0)
    }

    /// Displacement MLP on `[x_i ; global]` for every row of `x`.
    fn point_mlp(&self, x: &Tensor<T>, global: &Tensor<T>) -> Result<Tensor<T>> {
        if global.len() != self.arch.global_dim() {
            return Err(Error::Shape {
                op: "point_mlp",
                left: vec![self.arch.global_dim()],
                right: global.shape().to_vec(),
            });
        }
        let (w0, b0) = self.transformer[0];
        let mut h = conditioned_linear_forward(x, global, self.params.value(w0), self.params.value(b0))?;
        for &(w, b) in &self.transformer[1..] {
            h = relu_forward(&h);
            h = linear_forward(&h, self.params.value(w), self.params.value(b))?;
        }
        Ok(h)
    }

    fn global_of(&self, source: &PointSet, target: &PointSet) -> Result<Tensor<T>> {
        let fs = self.extract_global_feature(source)?;
        let ft = self.extract_global_feature(target)?;
        let mut data = fs.into_data();
        data.extend(ft.into_data());
        let n = data.len();
        Tensor::new(vec![n], data)
    }

    /// Per-point displacements aligning `source` to `target`.
    pub fn fpt_forward(&self, source: &PointSet, target: &PointSet) -> Result<DisplacementField<T>> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::Invalid("FPT needs nonempty source and target".into()));
        }
        let global = self.global_of(source, target)?;
        let displacements = self.point_mlp(&points_to_tensor(source), &global)?;
        Ok(DisplacementField { displacements, global })
    }

    /// Moves an arbitrary point with the displacement MLP under a given
    /// global feature. Identical to the matching `fpt_forward` row for
    /// source points.
    pub fn transform_point(&self, p: &Point, global: &Tensor<T>) -> Result<Point> {
        let d = self.displacement_at(p, global)?;
        Ok([p[0] + d[0], p[1] + d[1], p[2] + d[2]])
    }

    /// Displacement of an arbitrary point under a given global feature.
    pub fn displacement_at(&self, p: &Point, global: &Tensor<T>) -> Result<Point> {
        let x = Tensor::new(vec![1, 3], p.map(T::from_f64).to_vec())?;
        let d = self.point_mlp(&x, global)?;
        let d = d.data();
        Ok([d[0].as_f64(), d[1].as_f64(), d[2].as_f64()])
    }

    fn feature_on_tape(&self, tape: &mut Tape<'_, T>, x: NodeId) -> Result<NodeId> {
        let mut h = x;
        let n = self.feature.len();
        for (i, &(w, b)) in self.feature.iter().enumerate() {
            h = tape.linear(h, w, b)?;
            if i + 1 < n {
                h = tape.relu(h);
            }
        }
        tape.maxpool(h)
    }

    /// Records the full forward pass on `tape` (which must read this model's
    /// parameter store).
    pub fn forward_on_tape(
        &self,
        tape: &mut Tape<'_, T>,
        source: &PointSet,
        target: &PointSet,
    ) -> Result<ForwardNodes> {
        if source.is_empty() || target.is_empty() {
            return Err(Error::Invalid("FPT needs nonempty source and target".into()));
        }
        let src = tape.input(points_to_tensor(source));
        let tgt = tape.input(points_to_tensor(target));
        let fs = self.feature_on_tape(tape, src)?;
        let ft = self.feature_on_tape(tape, tgt)?;
        let global = tape.concat(fs, ft);

        let (w0, b0) = self.transformer[0];
        let mut h = tape.conditioned_linear(src, global, w0, b0)?;
        for &(w, b) in &self.transformer[1..] {
            h = tape.relu(h);
            h = tape.linear(h, w, b)?;
        }
        let moved = tape.add(src, h)?;
        Ok(ForwardNodes {
            source: src,
            displacement: h,
            moved,
            global,
        })
    }
}

fn uniform_weights<T: Scalar>(rng: &mut ChaCha8Rng, din: usize, dout: usize) -> Tensor<T> {
    let bound = (1.0 / din as f64).sqrt();
    let data = (0..din * dout)
        .map(|_| T::from_f64(rng.random_range(-bound..bound)))
        .collect();
    Tensor::new(vec![din, dout], data).expect("din×dout")
}
