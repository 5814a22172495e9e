//! Differentiable primitives recorded on a [`Tape`].

use super::linalg::{self, broadcast_axis};
use super::tape::{Backward, BackwardCtx, Tape, Value, Var};
use super::tensor::{split_axis, ComplexTensor, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

struct CMatMul {
    a: Var,
    b: Var,
}

impl<T: Scalar> Backward<T> for CMatMul {
    fn name(&self) -> &'static str {
        "cmatmul"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_complex()?;
        let a = ctx.value(self.a).as_complex()?.clone();
        let b = ctx.value(self.b).as_complex()?.clone();
        let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
        if ctx.needs(self.a) {
            // ga = g b^H
            let mut re = vec![T::zero(); m * k];
            let mut im = vec![T::zero(); m * k];
            linalg::cgemm(
                linalg::CView::row_major(g.re(), g.im(), m, n),
                linalg::CView::row_major(b.re(), b.im(), k, n).t().conj(),
                &mut re,
                &mut im,
                k,
                false,
            );
            ctx.accumulate(self.a, ComplexTensor::from_parts(&[m, k], re, im)?.into())?;
        }
        if ctx.needs(self.b) {
            // gb = a^H g
            let mut re = vec![T::zero(); k * n];
            let mut im = vec![T::zero(); k * n];
            linalg::cgemm(
                linalg::CView::row_major(a.re(), a.im(), m, k).t().conj(),
                linalg::CView::row_major(g.re(), g.im(), m, n),
                &mut re,
                &mut im,
                n,
                false,
            );
            ctx.accumulate(self.b, ComplexTensor::from_parts(&[k, n], re, im)?.into())?;
        }
        Ok(())
    }
}

struct AlongAxis {
    x: Var,
    w: Var,
    axis: usize,
}

impl<T: Scalar> Backward<T> for AlongAxis {
    fn name(&self) -> &'static str {
        "apply_along_axis"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_complex()?;
        if ctx.needs(self.w) {
            let w = ctx.value(self.w).as_complex()?;
            let (n, m) = (w.shape()[0], w.shape()[1]);
            let mut re = vec![T::zero(); n * m];
            let mut im = vec![T::zero(); n * m];
            let x = ctx.value(self.x).as_complex()?;
            linalg::apply_along_axis_grad_weight(g, x, self.axis, n, &mut re, &mut im)?;
            ctx.accumulate(self.w, ComplexTensor::from_parts(&[n, m], re, im)?.into())?;
        }
        if ctx.needs(self.x) {
            let w = ctx.value(self.w).as_complex()?;
            let x_shape = ctx.value(self.x).shape().to_vec();
            let gx = linalg::apply_along_axis_grad_input(g, w, self.axis, &x_shape)?;
            ctx.accumulate(self.x, gx.into())?;
        }
        Ok(())
    }
}

struct Modulus {
    x: Var,
}

impl<T: Scalar> Backward<T> for Modulus {
    fn name(&self) -> &'static str {
        "modulus"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_real()?;
        let x = ctx.value(self.x).as_complex()?;
        let n = x.len();
        let mut re = vec![T::zero(); n];
        let mut im = vec![T::zero(); n];
        for i in 0..n {
            let (r, j) = (x.re()[i], x.im()[i]);
            let m = (r * r + j * j).sqrt();
            // Subgradient 0 at the origin.
            if m > T::zero() {
                re[i] = g.data()[i] * r / m;
                im[i] = g.data()[i] * j / m;
            }
        }
        let gx = ComplexTensor::from_parts(x.shape(), re, im)?;
        ctx.accumulate(self.x, gx.into())
    }
}

struct LogEps<T> {
    x: Var,
    eps: T,
}

impl<T: Scalar> Backward<T> for LogEps<T> {
    fn name(&self) -> &'static str {
        "log_eps"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_real()?;
        let x = ctx.value(self.x).as_real()?;
        let data = x.data().iter().zip(g.data()).map(|(&v, &gv)| gv / (v + self.eps)).collect();
        ctx.accumulate(self.x, Tensor::from_vec(x.shape(), data)?.into())
    }
}

struct SumAxis {
    x: Var,
    axis: usize,
}

impl<T: Scalar> Backward<T> for SumAxis {
    fn name(&self) -> &'static str {
        "sum_axis"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let shape = ctx.value(self.x).shape().to_vec();
        let (outer, len, inner) = split_axis(&shape, self.axis)?;
        let gx: Value<T> = match g {
            Value::Real(g) => Tensor::from_vec(&shape, broadcast_axis(g.data(), outer, len, inner))?.into(),
            Value::Complex(g) => ComplexTensor::from_parts(
                &shape,
                broadcast_axis(g.re(), outer, len, inner),
                broadcast_axis(g.im(), outer, len, inner),
            )?
            .into(),
        };
        ctx.accumulate(self.x, gx)
    }
}

struct Add {
    a: Var,
    b: Var,
}

impl<T: Scalar> Backward<T> for Add {
    fn name(&self) -> &'static str {
        "add"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        ctx.accumulate(self.a, g.clone())?;
        ctx.accumulate(self.b, g.clone())
    }
}

struct Scale<T> {
    x: Var,
    c: T,
}

impl<T: Scalar> Backward<T> for Scale<T> {
    fn name(&self) -> &'static str {
        "scale"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let gx = match g {
            Value::Real(g) => Value::Real(g.map(|v| v * self.c)),
            Value::Complex(g) => Value::Complex(g.scale(self.c)),
        };
        ctx.accumulate(self.x, gx)
    }
}

struct SumAll {
    x: Var,
}

impl<T: Scalar> Backward<T> for SumAll {
    fn name(&self) -> &'static str {
        "sum_all"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let gv = g.as_real()?.data()[0];
        let shape = ctx.value(self.x).shape().to_vec();
        ctx.accumulate(self.x, Tensor::full(&shape, gv).into())
    }
}

struct Reshape {
    x: Var,
}

impl<T: Scalar> Backward<T> for Reshape {
    fn name(&self) -> &'static str {
        "reshape"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let shape = ctx.value(self.x).shape().to_vec();
        let gx = match g {
            Value::Real(g) => Value::Real(g.reshape(&shape)?),
            Value::Complex(g) => Value::Complex(g.reshape(&shape)?),
        };
        ctx.accumulate(self.x, gx)
    }
}

struct Relu {
    x: Var,
}

impl<T: Scalar> Backward<T> for Relu {
    fn name(&self) -> &'static str {
        "relu"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_real()?;
        let x = ctx.value(self.x).as_real()?;
        let data = x
            .data()
            .iter()
            .zip(g.data())
            .map(|(&v, &gv)| if v > T::zero() { gv } else { T::zero() })
            .collect();
        ctx.accumulate(self.x, Tensor::from_vec(x.shape(), data)?.into())
    }
}

impl<T: Scalar> Tape<T> {
    /// Complex matrix product `[m x k] * [k x n]`.
    pub fn cmatmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let y = linalg::cmatmul(self.complex(a)?, self.complex(b)?)?;
        Ok(self.record(y.into(), &[a, b], Box::new(CMatMul { a, b })))
    }

    /// Applies complex weight `w` (`[N x M]`) along `axis` of `x`.
    pub fn apply_along_axis(&mut self, x: Var, w: Var, axis: usize) -> Result<Var> {
        let y = linalg::apply_along_axis(self.complex(x)?, self.complex(w)?, axis)?;
        Ok(self.record(y.into(), &[x, w], Box::new(AlongAxis { x, w, axis })))
    }

    pub fn modulus(&mut self, x: Var) -> Result<Var> {
        let y = linalg::modulus(self.complex(x)?);
        Ok(self.record(y.into(), &[x], Box::new(Modulus { x })))
    }

    /// `ln(x + eps)` element-wise on a real tensor.
    pub fn log_eps(&mut self, x: Var, eps: T) -> Result<Var> {
        let y = self.real(x)?.map(|v| (v + eps).ln());
        Ok(self.record(y.into(), &[x], Box::new(LogEps { x, eps })))
    }

    pub fn sum_axis(&mut self, x: Var, axis: usize) -> Result<Var> {
        let y: Value<T> = match self.value(x) {
            Value::Real(t) => linalg::sum_axis(t, axis)?.into(),
            Value::Complex(t) => linalg::sum_axis_complex(t, axis)?.into(),
        };
        Ok(self.record(y, &[x], Box::new(SumAxis { x, axis })))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let y: Value<T> = match (self.value(a), self.value(b)) {
            (Value::Real(l), Value::Real(r)) if l.shape() == r.shape() => {
                let mut out = l.clone();
                out.add_assign(r);
                out.into()
            }
            (Value::Complex(l), Value::Complex(r)) => l.add(r)?.into(),
            (l, r) => {
                return Err(Error::Dimension {
                    op: "add",
                    left: l.shape().to_vec(),
                    right: r.shape().to_vec(),
                })
            }
        };
        Ok(self.record(y, &[a, b], Box::new(Add { a, b })))
    }

    pub fn scale(&mut self, x: Var, c: T) -> Result<Var> {
        let y = match self.value(x) {
            Value::Real(t) => Value::Real(t.map(|v| v * c)),
            Value::Complex(t) => Value::Complex(t.scale(c)),
        };
        Ok(self.record(y, &[x], Box::new(Scale { x, c })))
    }

    /// Sum of every element of a real tensor, as a scalar.
    pub fn sum_all(&mut self, x: Var) -> Result<Var> {
        let s = self.real(x)?.sum();
        Ok(self.record(Tensor::scalar(s).into(), &[x], Box::new(SumAll { x })))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let y = match self.value(x) {
            Value::Real(t) => Value::Real(t.reshape(shape)?),
            Value::Complex(t) => Value::Complex(t.reshape(shape)?),
        };
        Ok(self.record(y, &[x], Box::new(Reshape { x })))
    }

    pub fn relu(&mut self, x: Var) -> Result<Var> {
        let y = self.real(x)?.map(|v| if v > T::zero() { v } else { T::zero() });
        Ok(self.record(y.into(), &[x], Box::new(Relu { x })))
    }
}
