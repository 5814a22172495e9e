//! Reverse-mode automatic differentiation over tensor-valued nodes.
//!
//! A [`Tape`] records every primitive applied during one forward pass. Each
//! recorded node owns its value and, when any input needs a gradient, a
//! [`Backward`] object holding whatever it saved for the reverse pass.
//! [`Tape::backward`] walks the nodes in exact reverse recording order and
//! accumulates gradients additively, so fan-out needs no special handling.
//!
//! Complex values are differentiated as independent real/imaginary
//! coordinates: the gradient of a complex node is itself stored as a
//! [`ComplexTensor`] whose planes hold `dL/d(re)` and `dL/d(im)`.

use super::tensor::{ComplexTensor, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub enum Value<T> {
    Real(Tensor<T>),
    Complex(ComplexTensor<T>),
}

impl<T: Scalar> Value<T> {
    pub fn shape(&self) -> &[usize] {
        match self {
            Value::Real(t) => t.shape(),
            Value::Complex(t) => t.shape(),
        }
    }

    pub fn is_complex(&self) -> bool {
        matches!(self, Value::Complex(_))
    }

    pub fn as_real(&self) -> Result<&Tensor<T>> {
        match self {
            Value::Real(t) => Ok(t),
            Value::Complex(t) => Err(Error::Shape(format!(
                "expected a real tensor, found complex {:?}",
                t.shape()
            ))),
        }
    }

    pub fn as_complex(&self) -> Result<&ComplexTensor<T>> {
        match self {
            Value::Complex(t) => Ok(t),
            Value::Real(t) => Err(Error::Shape(format!(
                "expected a complex tensor, found real {:?}",
                t.shape()
            ))),
        }
    }

    /// Number of real coordinates (complex entries count twice).
    pub fn real_len(&self) -> usize {
        match self {
            Value::Real(t) => t.len(),
            Value::Complex(t) => 2 * t.len(),
        }
    }

    /// Reads real coordinate `i`; complex values list the real plane first.
    pub fn coord(&self, i: usize) -> T {
        match self {
            Value::Real(t) => t.data()[i],
            Value::Complex(t) => {
                if i < t.len() {
                    t.re()[i]
                } else {
                    t.im()[i - t.len()]
                }
            }
        }
    }

    pub fn coord_mut(&mut self, i: usize) -> &mut T {
        match self {
            Value::Real(t) => &mut t.data_mut()[i],
            Value::Complex(t) => {
                let n = t.len();
                let (re, im) = t.parts_mut();
                if i < n {
                    &mut re[i]
                } else {
                    &mut im[i - n]
                }
            }
        }
    }

    /// Coordinate planes in [`Value::coord`] order: the data of a real
    /// tensor, or the real then imaginary plane of a complex one.
    pub fn planes(&self) -> Vec<&[T]> {
        match self {
            Value::Real(t) => vec![t.data()],
            Value::Complex(t) => vec![t.re(), t.im()],
        }
    }

    pub fn planes_mut(&mut self) -> Vec<&mut [T]> {
        match self {
            Value::Real(t) => vec![t.data_mut()],
            Value::Complex(t) => {
                let (re, im) = t.parts_mut();
                vec![re, im]
            }
        }
    }

    pub fn zeros_like(&self) -> Self {
        match self {
            Value::Real(t) => Value::Real(Tensor::zeros(t.shape())),
            Value::Complex(t) => Value::Complex(ComplexTensor::zeros(t.shape())),
        }
    }

    pub fn is_finite(&self) -> bool {
        match self {
            Value::Real(t) => t.is_finite(),
            Value::Complex(t) => t.is_finite(),
        }
    }

    pub(crate) fn add_assign(&mut self, other: &Value<T>) -> Result<()> {
        match (self, other) {
            (Value::Real(a), Value::Real(b)) if a.len() == b.len() => a.add_assign(b),
            (Value::Complex(a), Value::Complex(b)) if a.len() == b.len() => a.add_assign(b),
            (a, b) => {
                return Err(Error::Dimension {
                    op: "gradient accumulation",
                    left: a.shape().to_vec(),
                    right: b.shape().to_vec(),
                })
            }
        }
        Ok(())
    }
}

impl<T> From<Tensor<T>> for Value<T> {
    fn from(t: Tensor<T>) -> Self {
        Value::Real(t)
    }
}

impl<T> From<ComplexTensor<T>> for Value<T> {
    fn from(t: ComplexTensor<T>) -> Self {
        Value::Complex(t)
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Reverse rule of a recorded primitive.
pub trait Backward<T: Scalar>: Send + Sync {
    fn name(&self) -> &'static str;

    /// Propagates `grad_out` (same kind and shape as the node's value) into
    /// the node's inputs through `ctx`.
    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, grad_out: &Value<T>) -> Result<()>;
}

struct Node<T: Scalar> {
    value: Value<T>,
    requires_grad: bool,
    op: Option<Box<dyn Backward<T>>>,
}

pub struct BackwardCtx<'a, T: Scalar> {
    tape: &'a Tape<T>,
    grads: &'a mut [Option<Value<T>>],
}

impl<'a, T: Scalar> BackwardCtx<'a, T> {
    pub fn value(&self, v: Var) -> &Value<T> {
        &self.tape.nodes[v.0].value
    }

    pub fn needs(&self, v: Var) -> bool {
        self.tape.nodes[v.0].requires_grad
    }

    pub fn accumulate(&mut self, v: Var, g: Value<T>) -> Result<()> {
        if !self.needs(v) {
            return Ok(());
        }
        if g.shape() != self.value(v).shape() || g.is_complex() != self.value(v).is_complex() {
            return Err(Error::Dimension {
                op: "gradient shape",
                left: g.shape().to_vec(),
                right: self.value(v).shape().to_vec(),
            });
        }
        match &mut self.grads[v.0] {
            Some(existing) => existing.add_assign(&g)?,
            slot @ None => *slot = Some(g),
        }
        Ok(())
    }
}

/// Gradients produced by one backward pass, indexed by [`Var`].
pub struct Gradients<T> {
    grads: Vec<Option<Value<T>>>,
}

impl<T: Scalar> Gradients<T> {
    pub fn get(&self, v: Var) -> Option<&Value<T>> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn take(&mut self, v: Var) -> Option<Value<T>> {
        self.grads.get_mut(v.0).and_then(|g| g.take())
    }
}

/// Operation record for one forward pass; rebuilt for every pass.
pub struct Tape<T: Scalar> {
    nodes: Vec<Node<T>>,
}

impl<T: Scalar> Default for Tape<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> Tape<T> {
    pub fn new() -> Self {
        Self { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn constant(&mut self, v: impl Into<Value<T>>) -> Var {
        self.push(v.into(), false, None)
    }

    /// Leaf whose gradient is retained by [`Tape::backward`].
    pub fn param(&mut self, v: impl Into<Value<T>>) -> Var {
        self.push(v.into(), true, None)
    }

    /// Records the output of a primitive. The reverse rule is kept only when
    /// some input participates in differentiation.
    pub fn record(&mut self, value: Value<T>, inputs: &[Var], op: Box<dyn Backward<T>>) -> Var {
        let requires = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.push(value, requires, requires.then_some(op))
    }

    fn push(&mut self, value: Value<T>, requires_grad: bool, op: Option<Box<dyn Backward<T>>>) -> Var {
        self.nodes.push(Node { value, requires_grad, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Value<T> {
        &self.nodes[v.0].value
    }

    pub fn real(&self, v: Var) -> Result<&Tensor<T>> {
        self.value(v).as_real()
    }

    pub fn complex(&self, v: Var) -> Result<&ComplexTensor<T>> {
        self.value(v).as_complex()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradients of a scalar real `loss` w.r.t. every leaf created with
    /// [`Tape::param`].
    pub fn backward(&self, loss: Var) -> Result<Gradients<T>> {
        let value = self.real(loss)?;
        if value.len() != 1 {
            return Err(Error::Shape(format!(
                "backward needs a scalar loss, got shape {:?}",
                value.shape()
            )));
        }
        let seed = Tensor::full(value.shape(), T::one());
        self.backward_from(loss, Value::Real(seed))
    }

    /// Reverse pass seeded with an arbitrary upstream gradient for `out`.
    pub fn backward_from(&self, out: Var, seed: Value<T>) -> Result<Gradients<T>> {
        if seed.shape() != self.value(out).shape() {
            return Err(Error::Dimension {
                op: "backward seed",
                left: seed.shape().to_vec(),
                right: self.value(out).shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Value<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        if !self.nodes[out.0].requires_grad {
            return Ok(Gradients { grads });
        }
        grads[out.0] = Some(seed);
        for idx in (0..=out.0).rev() {
            let Some(op) = self.nodes[idx].op.as_ref() else {
                continue;
            };
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let mut ctx = BackwardCtx { tape: self, grads: &mut grads };
            op.backward(&mut ctx, &g)?;
        }
        Ok(Gradients { grads })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Trace(Var, std::sync::Arc<std::sync::Mutex<Vec<usize>>>, usize);

    impl Backward<f64> for Trace {
        fn name(&self) -> &'static str {
            "trace"
        }
        fn backward(&self, ctx: &mut BackwardCtx<'_, f64>, g: &Value<f64>) -> Result<()> {
            self.1.lock().unwrap().push(self.2);
            ctx.accumulate(self.0, g.clone())
        }
    }

    #[test]
    fn backward_visits_nodes_in_reverse_recording_order() {
        let log = std::sync::Arc::new(std::sync::Mutex::new(Vec::new()));
        let mut tape = Tape::<f64>::new();
        let mut v = tape.param(Tensor::scalar(1.0));
        for i in 0..5 {
            let val = tape.value(v).clone();
            v = tape.record(val, &[v], Box::new(Trace(v, log.clone(), i)));
        }
        tape.backward(v).unwrap();
        assert_eq!(*log.lock().unwrap(), vec![4, 3, 2, 1, 0]);
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut tape = Tape::<f64>::new();
        let c = tape.constant(Tensor::scalar(2.0));
        let g = tape.backward(c).unwrap();
        assert!(g.get(c).is_none());
    }
}
