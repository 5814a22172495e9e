//! Floating-point scalar abstraction shared by every numeric kernel.
//!
//! All tensors, layers and optimizers are generic over [`Scalar`], which is
//! implemented for `f32` and `f64`. The crate root exposes `f64` aliases since
//! that is the precision used for training and for the reference checks.

use num_traits::{Float, FromPrimitive, NumAssign, ToPrimitive};
use std::fmt::{Debug, Display, LowerExp};

pub trait Scalar:
    'static
    + Float
    + NumAssign
    + FromPrimitive
    + ToPrimitive
    + Default
    + Send
    + Sync
    + Debug
    + Display
    + LowerExp
{
    /// `C <- alpha * A * B + beta * C` on strided row/column views.
    ///
    /// # Safety
    /// Every index reachable through the given dimensions and strides must lie
    /// inside the corresponding allocation, and `c` must not alias `a` or `b`.
    #[allow(clippy::too_many_arguments)]
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: Self,
        a: *const Self,
        rsa: isize,
        csa: isize,
        b: *const Self,
        rsb: isize,
        csb: isize,
        beta: Self,
        c: *mut Self,
        rsc: isize,
        csc: isize,
    );

    fn from_f32_bits(v: f32) -> Self;
    fn to_f32_lossy(self) -> f32;
}

impl Scalar for f64 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f64,
        a: *const f64,
        rsa: isize,
        csa: isize,
        b: *const f64,
        rsb: isize,
        csb: isize,
        beta: f64,
        c: *mut f64,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::dgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f32_bits(v: f32) -> f64 {
        v as f64
    }

    fn to_f32_lossy(self) -> f32 {
        self as f32
    }
}

impl Scalar for f32 {
    unsafe fn gemm_raw(
        m: usize,
        k: usize,
        n: usize,
        alpha: f32,
        a: *const f32,
        rsa: isize,
        csa: isize,
        b: *const f32,
        rsb: isize,
        csb: isize,
        beta: f32,
        c: *mut f32,
        rsc: isize,
        csc: isize,
    ) {
        matrixmultiply::sgemm(m, k, n, alpha, a, rsa, csa, b, rsb, csb, beta, c, rsc, csc)
    }

    fn from_f32_bits(v: f32) -> f32 {
        v
    }

    fn to_f32_lossy(self) -> f32 {
        self
    }
}

/// Lossless-enough literal conversion, `lit::<T>(0.5)`.
#[inline(always)]
pub fn lit<T: Scalar>(v: f64) -> T {
    T::from_f64(v).expect("literal representable in scalar type")
}

#[inline(always)]
pub fn from_usize<T: Scalar>(v: usize) -> T {
    T::from_usize(v).expect("count representable in scalar type")
}
