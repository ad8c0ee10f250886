use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::tape::{ParamStore, Parameter};
use super::tensor::{Scalar, Tensor};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.001,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl AdamConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.lr >= 0.0
            && (0.0..1.0).contains(&self.beta1)
            && (0.0..1.0).contains(&self.beta2)
            && self.epsilon > 0.0;
        if !ok {
            return Err(Error::Invalid(format!("bad Adam hyperparameters {self:?}")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub m: Tensor<T>,
    pub v: Tensor<T>,
    pub step_count: u64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(shape: &[usize]) -> Self {
        AdamState {
            m: Tensor::zeros(shape),
            v: Tensor::zeros(shape),
            step_count: 0,
        }
    }
}

/// One bias-corrected Adam update of `param` from its current `grad`.
///
/// An all-zero gradient leaves the value and moments untouched; only the
/// step counter advances.
pub fn adam_step<T: Scalar>(param: &mut Parameter<T>, state: &mut AdamState<T>, cfg: &AdamConfig) -> Result<()> {
    if !param.grad.is_finite() {
        return Err(Error::NonFinite(format!("gradient of parameter {:?}", param.name)));
    }
    state.step_count += 1;
    if param.grad.data().iter().all(|g| g.is_zero()) {
        return Ok(());
    }
    let t = state.step_count as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    let (b1, b2) = (T::from_f64(cfg.beta1), T::from_f64(cfg.beta2));
    let (one_b1, one_b2) = (T::from_f64(1.0 - cfg.beta1), T::from_f64(1.0 - cfg.beta2));
    let step = T::from_f64(cfg.lr / c1);
    let inv_c2 = T::from_f64(1.0 / c2);
    let eps = T::from_f64(cfg.epsilon);

    let values = param.value.data_mut();
    let m = state.m.data_mut();
    let v = state.v.data_mut();
    for (((theta, &g), m), v) in values.iter_mut().zip(param.grad.data()).zip(m).zip(v) {
        *m = b1 * *m + one_b1 * g;
        *v = b2 * *v + one_b2 * g * g;
        let v_hat = *v * inv_c2;
        *theta = *theta - step * *m / (v_hat.sqrt() + eps);
    }
    Ok(())
}

/// Adam over every parameter of a [`ParamStore`].
#[derive(Clone, Debug)]
pub struct Adam<T> {
    pub config: AdamConfig,
    states: Vec<AdamState<T>>,
}

impl<T: Scalar> Adam<T> {
    pub fn new(store: &ParamStore<T>, config: AdamConfig) -> Result<Self> {
        config.validate()?;
        Ok(Adam {
            config,
            states: store.iter().map(|p| AdamState::new(p.value.shape())).collect(),
        })
    }

    pub fn step(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        // Check everything first so a bad gradient leaves all parameters intact.
        if let Some(p) = store.iter().find(|p| !p.grad.is_finite()) {
            return Err(Error::NonFinite(format!("gradient of parameter {:?}", p.name)));
        }
        for (p, s) in store.iter_mut().zip(&mut self.states) {
            adam_step(p, s, &self.config)?;
        }
        Ok(())
    }

    pub fn states(&self) -> &[AdamState<T>] {
        &self.states
    }
}
