//! Dense tensors, layer kernels, a fixed-op gradient tape and Adam.

mod adam;
pub mod ops;
mod tape;
mod tensor;

pub use adam::{adam_step, Adam, AdamConfig, AdamState};
pub use ops::{linear_forward, maxpool_points, relu_forward};
pub use tape::{Gradients, NodeId, ParamId, ParamStore, Parameter, Tape};
pub use tensor::{Scalar, Tensor};

/// Central-difference gradient of `f` at `theta`.
pub fn finite_difference_gradient<F>(mut f: F, theta: &[f64], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = theta.to_vec();
    (0..theta.len())
        .map(|i| {
            probe[i] = theta[i] + h;
            let up = f(&probe);
            probe[i] = theta[i] - h;
            let down = f(&probe);
            probe[i] = theta[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}
