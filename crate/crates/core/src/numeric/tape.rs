//! Reverse-mode differentiation over a small fixed set of operations.
//!
//! A [`Tape`] evaluates each op eagerly as it is recorded and keeps the
//! intermediate values around for [`Tape::backward`]. Parameters are read from
//! a shared [`ParamStore`] so several tapes can run over the same weights.

use std::collections::HashMap;

use crate::error::{Error, Result};

use super::ops;
use super::tensor::{Scalar, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub struct Parameter<T> {
    pub name: String,
    pub value: Tensor<T>,
    pub grad: Tensor<T>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter collection. Names are unique.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore<T> {
    params: Vec<Parameter<T>>,
    by_name: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore {
            params: Vec::new(),
            by_name: HashMap::new(),
        }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.by_name.contains_key(&name) {
            return Err(Error::Invalid(format!("duplicate parameter name {name:?}")));
        }
        let id = self.params.len();
        let grad = Tensor::zeros(value.shape());
        self.by_name.insert(name.clone(), id);
        self.params.push(Parameter { name, value, grad });
        Ok(ParamId(id))
    }

    pub fn get(&self, id: ParamId) -> &Parameter<T> {
        &self.params[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Parameter<T> {
        &mut self.params[id.0]
    }

    pub fn value(&self, id: ParamId) -> &Tensor<T> {
        &self.params[id.0].value
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.by_name.get(name).map(|&i| ParamId(i))
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Parameter<T>> {
        self.params.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Parameter<T>> {
        self.params.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.params.len()).map(ParamId)
    }

    /// Total scalar count over all parameters.
    pub fn numel(&self) -> usize {
        self.params.iter().map(|p| p.value.len()).sum()
    }

    pub fn set_grads(&mut self, grads: Gradients<T>) {
        for (p, g) in self.params.iter_mut().zip(grads.grads) {
            p.grad = g;
        }
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.params {
            p.grad = Tensor::zeros(p.value.shape());
        }
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self
                .params
                .iter()
                .map(|p| Parameter {
                    name: p.name.clone(),
                    value: p.value.cast(),
                    grad: p.grad.cast(),
                })
                .collect(),
            by_name: self.by_name.clone(),
        }
    }
}

/// One gradient tensor per parameter of a store, in store order.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients<T> {
    pub grads: Vec<Tensor<T>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn zeros_like(store: &ParamStore<T>) -> Self {
        Gradients {
            grads: store.iter().map(|p| Tensor::zeros(p.value.shape())).collect(),
        }
    }

    pub fn accumulate(&mut self, other: &Gradients<T>) -> Result<()> {
        for (a, b) in self.grads.iter_mut().zip(&other.grads) {
            a.add_assign(b)?;
        }
        Ok(())
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.grads[id.0]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

#[derive(Debug)]
enum Op<T> {
    Input,
    Linear { x: NodeId, w: ParamId, b: ParamId },
    ConditionedLinear { x: NodeId, cond: NodeId, w: ParamId, b: ParamId },
    Relu { x: NodeId },
    MaxPool { x: NodeId, argmax: Vec<usize> },
    Concat { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId },
    Sum { x: NodeId },
    /// Scalar computed outside the tape together with its local gradient.
    External { x: NodeId, grad: Tensor<T> },
}

#[derive(Debug)]
struct Node<T> {
    op: Op<T>,
    value: Tensor<T>,
}

pub struct Tape<'p, T> {
    params: &'p ParamStore<T>,
    nodes: Vec<Node<T>>,
}

impl<'p, T: Scalar> Tape<'p, T> {
    pub fn new(params: &'p ParamStore<T>) -> Self {
        Tape {
            params,
            nodes: Vec::new(),
        }
    }

    fn push(&mut self, op: Op<T>, value: Tensor<T>) -> NodeId {
        self.nodes.push(Node { op, value });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &Tensor<T> {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a constant. Inputs never receive gradients that leave the tape.
    pub fn input(&mut self, value: Tensor<T>) -> NodeId {
        self.push(Op::Input, value)
    }

    pub fn linear(&mut self, x: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let y = ops::linear_forward(self.value(x), self.params.value(w), self.params.value(b))?;
        Ok(self.push(Op::Linear { x, w, b }, y))
    }

    pub fn conditioned_linear(&mut self, x: NodeId, cond: NodeId, w: ParamId, b: ParamId) -> Result<NodeId> {
        let y = ops::conditioned_linear_forward(
            self.value(x),
            self.value(cond),
            self.params.value(w),
            self.params.value(b),
        )?;
        Ok(self.push(Op::ConditionedLinear { x, cond, w, b }, y))
    }

    pub fn relu(&mut self, x: NodeId) -> NodeId {
        let y = ops::relu_forward(self.value(x));
        self.push(Op::Relu { x }, y)
    }

    pub fn maxpool(&mut self, x: NodeId) -> Result<NodeId> {
        let (y, argmax) = ops::maxpool_points(self.value(x))?;
        Ok(self.push(Op::MaxPool { x, argmax }, y))
    }

    /// Concatenates two vectors.
    pub fn concat(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let mut data = self.value(a).data().to_vec();
        data.extend_from_slice(self.value(b).data());
        let n = data.len();
        let y = Tensor::new(vec![n], data).expect("vector");
        self.push(Op::Concat { a, b }, y)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let mut y = self.value(a).clone();
        y.add_assign(self.value(b))?;
        Ok(self.push(Op::Add { a, b }, y))
    }

    pub fn sum(&mut self, x: NodeId) -> NodeId {
        let y = Tensor::scalar(self.value(x).sum());
        self.push(Op::Sum { x }, y)
    }

    /// Records a scalar `value = f(x)` evaluated elsewhere, with `grad = ∂f/∂x`.
    pub fn external_scalar(&mut self, x: NodeId, value: T, grad: Tensor<T>) -> Result<NodeId> {
        if grad.shape() != self.value(x).shape() {
            return Err(Error::Shape {
                op: "external_scalar",
                left: self.value(x).shape().to_vec(),
                right: grad.shape().to_vec(),
            });
        }
        Ok(self.push(Op::External { x, grad }, Tensor::scalar(value)))
    }

    /// Accumulates `seed · ∂loss/∂θ` for every parameter in the store.
    ///
    /// Parameters that the loss does not depend on get zero gradients.
    pub fn backward(&self, loss: NodeId, seed: T) -> Result<Gradients<T>> {
        if self.nodes.is_empty() {
            return Err(Error::State("backward called before any forward op".into()));
        }
        if loss.0 >= self.nodes.len() {
            return Err(Error::State(format!("node {} not recorded on this tape", loss.0)));
        }
        if self.value(loss).len() != 1 {
            return Err(Error::State(format!(
                "backward needs a scalar loss, got shape {:?}",
                self.value(loss).shape()
            )));
        }

        let mut grads = Gradients::zeros_like(self.params);
        let mut node_grads: Vec<Option<Tensor<T>>> = (0..=loss.0).map(|_| None).collect();
        node_grads[loss.0] = Some(Tensor::new(self.value(loss).shape().to_vec(), vec![seed])?);

        for idx in (0..=loss.0).rev() {
            let Some(dy) = node_grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Input => {}
                Op::Linear { x, w, b } => {
                    let (dx, dw, db) = ops::linear_backward(self.value(*x), self.params.value(*w), &dy);
                    grads.grads[w.0].add_assign(&dw)?;
                    grads.grads[b.0].add_assign(&db)?;
                    accumulate(&mut node_grads, *x, dx)?;
                }
                Op::ConditionedLinear { x, cond, w, b } => {
                    let (dx, dcond, dw, db) = ops::conditioned_linear_backward(
                        self.value(*x),
                        self.value(*cond),
                        self.params.value(*w),
                        &dy,
                    );
                    grads.grads[w.0].add_assign(&dw)?;
                    grads.grads[b.0].add_assign(&db)?;
                    accumulate(&mut node_grads, *x, dx)?;
                    accumulate(&mut node_grads, *cond, dcond)?;
                }
                Op::Relu { x } => {
                    let dx = ops::relu_backward(self.value(*x), &dy);
                    accumulate(&mut node_grads, *x, dx)?;
                }
                Op::MaxPool { x, argmax } => {
                    let dx = ops::maxpool_backward(self.value(*x).rows(), argmax, &dy);
                    accumulate(&mut node_grads, *x, dx)?;
                }
                Op::Concat { a, b } => {
                    let na = self.value(*a).len();
                    let (ga, gb) = dy.data().split_at(na);
                    let da = Tensor::new(self.value(*a).shape().to_vec(), ga.to_vec())?;
                    let db = Tensor::new(self.value(*b).shape().to_vec(), gb.to_vec())?;
                    accumulate(&mut node_grads, *a, da)?;
                    accumulate(&mut node_grads, *b, db)?;
                }
                Op::Add { a, b } => {
                    accumulate(&mut node_grads, *a, dy.clone())?;
                    accumulate(&mut node_grads, *b, dy)?;
                }
                Op::Sum { x } => {
                    let g = dy.data()[0];
                    let shape = self.value(*x).shape().to_vec();
                    let n = self.value(*x).len();
                    accumulate(&mut node_grads, *x, Tensor::new(shape, vec![g; n])?)?;
                }
                Op::External { x, grad } => {
                    let mut dx = grad.clone();
                    dx.scale(dy.data()[0]);
                    accumulate(&mut node_grads, *x, dx)?;
                }
            }
        }
        Ok(grads)
    }
}

fn accumulate<T: Scalar>(node_grads: &mut [Option<Tensor<T>>], id: NodeId, g: Tensor<T>) -> Result<()> {
    match &mut node_grads[id.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}
