//! Complex activations placed between the linear layers.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

use crate::ctensor::{Backward, BackwardCtx, ComplexTensor, Tape, Tensor, Value, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Activation {
    #[default]
    None,
    ModRelu,
    CRelu,
    ZRelu,
}

impl Activation {
    pub const ALL: [Activation; 4] = [Activation::None, Activation::ModRelu, Activation::CRelu, Activation::ZRelu];

    pub fn name(self) -> &'static str {
        match self {
            Activation::None => "none",
            Activation::ModRelu => "modrelu",
            Activation::CRelu => "crelu",
            Activation::ZRelu => "zrelu",
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| c.is_ascii_alphanumeric()).collect::<String>().to_ascii_lowercase();
        Activation::ALL
            .into_iter()
            .find(|a| a.name() == norm)
            .ok_or_else(|| Error::Config(format!("unknown activation '{s}'")))
    }
}

/// `max(|z| + b, 0) * z / |z|`, zero at the origin. Returns the output and
/// the gain `s / |z|` (0 where the unit is off).
fn modrelu_one<T: Scalar>(zr: T, zi: T, b: T) -> (T, T, T) {
    let m = zr.hypot(zi);
    let s = m + b;
    if m > T::zero() && s > T::zero() {
        let gain = s / m;
        (zr * gain, zi * gain, gain)
    } else {
        (T::zero(), T::zero(), T::zero())
    }
}

fn crelu_one<T: Scalar>(zr: T, zi: T) -> (T, T) {
    (zr.max(T::zero()), zi.max(T::zero()))
}

fn zrelu_on<T: Scalar>(zr: T, zi: T) -> bool {
    zr > T::zero() && zi > T::zero()
}

/// Value-level activation; ModReLU uses the same bias `b` for every element.
pub fn apply_activation<T: Scalar>(t: &ComplexTensor<T>, kind: Activation, b: T) -> ComplexTensor<T> {
    let mut out = t.clone();
    let (re, im) = out.parts_mut();
    for (r, i) in re.iter_mut().zip(im.iter_mut()) {
        let (nr, ni) = match kind {
            Activation::None => (*r, *i),
            Activation::ModRelu => {
                let (a, c, _) = modrelu_one(*r, *i, b);
                (a, c)
            }
            Activation::CRelu => crelu_one(*r, *i),
            Activation::ZRelu => {
                if zrelu_on(*r, *i) {
                    (*r, *i)
                } else {
                    (T::zero(), T::zero())
                }
            }
        };
        *r = nr;
        *i = ni;
    }
    out
}

struct ModRelu {
    x: Var,
    b: Var,
    axis: usize,
}

/// Index of the bias entry for flat position `i` when the bias runs along
/// an axis of length `len` with `inner` trailing elements.
fn feature(i: usize, len: usize, inner: usize) -> usize {
    (i / inner) % len
}

impl<T: Scalar> Backward<T> for ModRelu {
    fn name(&self) -> &'static str {
        "modrelu"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_complex()?;
        let x = ctx.value(self.x).as_complex()?;
        let b = ctx.value(self.b).as_real()?;
        let len = b.len();
        let inner: usize = x.shape()[self.axis + 1..].iter().product();
        let n = x.len();
        let mut gxr = vec![T::zero(); n];
        let mut gxi = vec![T::zero(); n];
        let mut gb = vec![T::zero(); len];
        for i in 0..n {
            let k = feature(i, len, inner);
            let (zr, zi) = (x.re()[i], x.im()[i]);
            let m = zr.hypot(zi);
            let bias = b.data()[k];
            if !(m > T::zero() && m + bias > T::zero()) {
                continue;
            }
            let (gr, gi) = (g.re()[i], g.im()[i]);
            let m3 = m * m * m;
            let cross = bias * zr * zi / m3;
            gxr[i] = gr * (T::one() + bias * zi * zi / m3) - gi * cross;
            gxi[i] = gi * (T::one() + bias * zr * zr / m3) - gr * cross;
            gb[k] += (gr * zr + gi * zi) / m;
        }
        let shape = x.shape().to_vec();
        let b_shape = b.shape().to_vec();
        ctx.accumulate(self.x, ComplexTensor::from_parts(&shape, gxr, gxi)?.into())?;
        ctx.accumulate(self.b, Tensor::from_vec(&b_shape, gb)?.into())
    }
}

/// Element-wise mask op shared by CReLU and zReLU.
struct MaskRelu {
    x: Var,
    zrelu: bool,
}

impl<T: Scalar> Backward<T> for MaskRelu {
    fn name(&self) -> &'static str {
        if self.zrelu {
            "zrelu"
        } else {
            "crelu"
        }
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_complex()?;
        let x = ctx.value(self.x).as_complex()?;
        let n = x.len();
        let mut gr = vec![T::zero(); n];
        let mut gi = vec![T::zero(); n];
        for i in 0..n {
            let (zr, zi) = (x.re()[i], x.im()[i]);
            if self.zrelu {
                if zrelu_on(zr, zi) {
                    gr[i] = g.re()[i];
                    gi[i] = g.im()[i];
                }
            } else {
                if zr > T::zero() {
                    gr[i] = g.re()[i];
                }
                if zi > T::zero() {
                    gi[i] = g.im()[i];
                }
            }
        }
        let shape = x.shape().to_vec();
        ctx.accumulate(self.x, ComplexTensor::from_parts(&shape, gr, gi)?.into())
    }
}

/// ModReLU with a learnable real bias `b` (rank 1) running along `axis` of `x`.
pub fn mod_relu<T: Scalar>(tape: &mut Tape<T>, x: Var, b: Var, axis: usize) -> Result<Var> {
    let xv = tape.complex(x)?;
    let bv = tape.real(b)?;
    if axis >= xv.rank() || bv.rank() != 1 || bv.len() != xv.shape()[axis] {
        return Err(Error::Dimension {
            op: "modrelu bias",
            left: xv.shape().to_vec(),
            right: bv.shape().to_vec(),
        });
    }
    let len = bv.len();
    let inner: usize = xv.shape()[axis + 1..].iter().product();
    let mut y = xv.clone();
    let bias = bv.data().to_vec();
    let (re, im) = y.parts_mut();
    for (i, (r, c)) in re.iter_mut().zip(im.iter_mut()).enumerate() {
        let (a, d, _) = modrelu_one(*r, *c, bias[feature(i, len, inner)]);
        *r = a;
        *c = d;
    }
    Ok(tape.record(y.into(), &[x, b], Box::new(ModRelu { x, b, axis })))
}

pub fn c_relu<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let y = apply_activation(tape.complex(x)?, Activation::CRelu, T::zero());
    Ok(tape.record(y.into(), &[x], Box::new(MaskRelu { x, zrelu: false })))
}

pub fn z_relu<T: Scalar>(tape: &mut Tape<T>, x: Var) -> Result<Var> {
    let y = apply_activation(tape.complex(x)?, Activation::ZRelu, T::zero());
    Ok(tape.record(y.into(), &[x], Box::new(MaskRelu { x, zrelu: true })))
}
