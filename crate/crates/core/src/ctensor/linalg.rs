//! Real and complex GEMM kernels plus the "apply a matrix along one axis"
//! primitive every learnable transform is built from.

use super::tensor::{numel, split_axis, ComplexTensor, Tensor};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Strided read-only matrix view.
#[derive(Clone, Copy)]
pub(crate) struct View<'a, T> {
    pub data: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
}

impl<'a, T> View<'a, T> {
    pub fn row_major(data: &'a [T], rows: usize, cols: usize) -> Self {
        Self { data, rows, cols, rs: cols, cs: 1 }
    }

    pub fn t(self) -> Self {
        Self {
            data: self.data,
            rows: self.cols,
            cols: self.rows,
            rs: self.cs,
            cs: self.rs,
        }
    }

    fn max_index(&self) -> Option<usize> {
        if self.rows == 0 || self.cols == 0 {
            None
        } else {
            Some((self.rows - 1) * self.rs + (self.cols - 1) * self.cs)
        }
    }
}

/// `c = alpha * a * b + beta * c` where `c` is row-major `[a.rows x b.cols]`
/// with row stride `c_rs`.
pub(crate) fn gemm<T: Scalar>(alpha: T, a: View<T>, b: View<T>, beta: T, c: &mut [T], c_rs: usize) {
    assert_eq!(a.cols, b.rows, "gemm inner dimension");
    let (m, k, n) = (a.rows, a.cols, b.cols);
    if m == 0 || n == 0 {
        return;
    }
    assert!(c.len() > (m - 1) * c_rs + n - 1, "gemm output too small");
    if k == 0 {
        for i in 0..m {
            for v in &mut c[i * c_rs..i * c_rs + n] {
                *v = if beta == T::zero() { T::zero() } else { *v * beta };
            }
        }
        return;
    }
    assert!(a.max_index().map_or(true, |i| i < a.data.len()), "gemm lhs view out of bounds");
    assert!(b.max_index().map_or(true, |i| i < b.data.len()), "gemm rhs view out of bounds");
    // SAFETY: the bounds of all three views were checked above and `c` is a
    // distinct mutable borrow.
    unsafe {
        T::gemm_raw(
            m,
            k,
            n,
            alpha,
            a.data.as_ptr(),
            a.rs as isize,
            a.cs as isize,
            b.data.as_ptr(),
            b.rs as isize,
            b.cs as isize,
            beta,
            c.as_mut_ptr(),
            c_rs as isize,
            1,
        );
    }
}

/// Strided complex view over split re/im planes.
#[derive(Clone, Copy)]
pub(crate) struct CView<'a, T> {
    pub re: &'a [T],
    pub im: &'a [T],
    pub rows: usize,
    pub cols: usize,
    pub rs: usize,
    pub cs: usize,
    pub conj: bool,
}

impl<'a, T> CView<'a, T> {
    pub fn row_major(re: &'a [T], im: &'a [T], rows: usize, cols: usize) -> Self {
        Self { re, im, rows, cols, rs: cols, cs: 1, conj: false }
    }

    pub fn t(self) -> Self {
        Self { rows: self.cols, cols: self.rows, rs: self.cs, cs: self.rs, ..self }
    }

    pub fn conj(self) -> Self {
        Self { conj: !self.conj, ..self }
    }

    fn parts(&self) -> (View<'a, T>, View<'a, T>) {
        let mk = |data| View { data, rows: self.rows, cols: self.cols, rs: self.rs, cs: self.cs };
        (mk(self.re), mk(self.im))
    }
}

/// Complex `c (+)= a * b` with optional conjugation carried by the views.
/// Four real products: `cr = ar br - sa sb ai bi`, `ci = sb ar bi + sa ai br`.
pub(crate) fn cgemm<T: Scalar>(
    a: CView<T>,
    b: CView<T>,
    c_re: &mut [T],
    c_im: &mut [T],
    c_rs: usize,
    accumulate: bool,
) {
    let (ar, ai) = a.parts();
    let (br, bi) = b.parts();
    let one = T::one();
    let sa = if a.conj { -one } else { one };
    let sb = if b.conj { -one } else { one };
    let beta = if accumulate { one } else { T::zero() };
    gemm(one, ar, br, beta, c_re, c_rs);
    gemm(-(sa * sb), ai, bi, one, c_re, c_rs);
    gemm(sb, ar, bi, beta, c_im, c_rs);
    gemm(sa, ai, br, one, c_im, c_rs);
}

/// Standard complex matrix product `[m x k] * [k x n]`.
pub fn cmatmul<T: Scalar>(a: &ComplexTensor<T>, b: &ComplexTensor<T>) -> Result<ComplexTensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Dimension {
            op: "cmatmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut re = vec![T::zero(); m * n];
    let mut im = vec![T::zero(); m * n];
    cgemm(
        CView::row_major(a.re(), a.im(), m, k),
        CView::row_major(b.re(), b.im(), k, n),
        &mut re,
        &mut im,
        n,
        false,
    );
    ComplexTensor::from_parts(&[m, n], re, im)
}

/// Real matrix product `[m x k] * [k x n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    if a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0] {
        return Err(Error::Dimension {
            op: "matmul",
            left: a.shape().to_vec(),
            right: b.shape().to_vec(),
        });
    }
    let (m, k, n) = (a.shape()[0], a.shape()[1], b.shape()[1]);
    let mut out = vec![T::zero(); m * n];
    gemm(
        T::one(),
        View::row_major(a.data(), m, k),
        View::row_major(b.data(), k, n),
        T::zero(),
        &mut out,
        n,
    );
    Tensor::from_vec(&[m, n], out)
}

fn check_axis_weight<T: Scalar>(
    x_shape: &[usize],
    w: &ComplexTensor<T>,
    axis: usize,
) -> Result<(usize, usize, usize, usize)> {
    let (outer, len, inner) = split_axis(x_shape, axis)?;
    if w.rank() != 2 || w.shape()[1] != len {
        return Err(Error::Dimension {
            op: "apply_along_axis",
            left: x_shape.to_vec(),
            right: w.shape().to_vec(),
        });
    }
    Ok((outer, len, inner, w.shape()[0]))
}

/// `y[.., n, ..] = sum_m w[n, m] x[.., m, ..]` along `axis`; the axis length
/// changes from `M` to `N` for a weight of shape `[N x M]`.
pub fn apply_along_axis<T: Scalar>(
    x: &ComplexTensor<T>,
    w: &ComplexTensor<T>,
    axis: usize,
) -> Result<ComplexTensor<T>> {
    let (outer, m, inner, n) = check_axis_weight(x.shape(), w, axis)?;
    let mut shape = x.shape().to_vec();
    shape[axis] = n;
    let total = numel(&shape);
    let mut re = vec![T::zero(); total];
    let mut im = vec![T::zero(); total];
    let wv = CView::row_major(w.re(), w.im(), n, m);
    if inner == 1 {
        cgemm(
            CView::row_major(x.re(), x.im(), outer, m),
            wv.t(),
            &mut re,
            &mut im,
            n,
            false,
        );
    } else {
        for o in 0..outer {
            let xs = o * m * inner..(o + 1) * m * inner;
            let ys = o * n * inner..(o + 1) * n * inner;
            cgemm(
                wv,
                CView::row_major(&x.re()[xs.clone()], &x.im()[xs], m, inner),
                &mut re[ys.clone()],
                &mut im[ys],
                inner,
                false,
            );
        }
    }
    ComplexTensor::from_parts(&shape, re, im)
}

/// Gradient of a real loss w.r.t. the input of [`apply_along_axis`]:
/// `gx = W^H gy` along the axis.
pub(crate) fn apply_along_axis_grad_input<T: Scalar>(
    gy: &ComplexTensor<T>,
    w: &ComplexTensor<T>,
    axis: usize,
    x_shape: &[usize],
) -> Result<ComplexTensor<T>> {
    let (outer, m, inner, n) = check_axis_weight(x_shape, w, axis)?;
    let total = numel(x_shape);
    let mut re = vec![T::zero(); total];
    let mut im = vec![T::zero(); total];
    let wv = CView::row_major(w.re(), w.im(), n, m);
    if inner == 1 {
        // gX [outer x M] = gY [outer x N] * conj(W)
        cgemm(
            CView::row_major(gy.re(), gy.im(), outer, n),
            wv.conj(),
            &mut re,
            &mut im,
            m,
            false,
        );
    } else {
        for o in 0..outer {
            let gs = o * n * inner..(o + 1) * n * inner;
            let xs = o * m * inner..(o + 1) * m * inner;
            cgemm(
                wv.t().conj(),
                CView::row_major(&gy.re()[gs.clone()], &gy.im()[gs], n, inner),
                &mut re[xs.clone()],
                &mut im[xs],
                inner,
                false,
            );
        }
    }
    ComplexTensor::from_parts(x_shape, re, im)
}

/// Gradient w.r.t. the weight of [`apply_along_axis`]: `gW = sum gy x^H`.
/// Accumulates into `(g_re, g_im)` of shape `[N x M]`.
pub(crate) fn apply_along_axis_grad_weight<T: Scalar>(
    gy: &ComplexTensor<T>,
    x: &ComplexTensor<T>,
    axis: usize,
    n: usize,
    g_re: &mut [T],
    g_im: &mut [T],
) -> Result<()> {
    let (outer, m, inner) = split_axis(x.shape(), axis)?;
    if inner == 1 {
        // gW [N x M] = gY^T [N x outer] * conj(X) [outer x M]
        cgemm(
            CView::row_major(gy.re(), gy.im(), outer, n).t(),
            CView::row_major(x.re(), x.im(), outer, m).conj(),
            g_re,
            g_im,
            m,
            true,
        );
    } else {
        for o in 0..outer {
            let gs = o * n * inner..(o + 1) * n * inner;
            let xs = o * m * inner..(o + 1) * m * inner;
            cgemm(
                CView::row_major(&gy.re()[gs.clone()], &gy.im()[gs], n, inner),
                CView::row_major(&x.re()[xs.clone()], &x.im()[xs], m, inner).t().conj(),
                g_re,
                g_im,
                m,
                true,
            );
        }
    }
    Ok(())
}

/// Element-wise `sqrt(re^2 + im^2)`.
pub fn modulus<T: Scalar>(t: &ComplexTensor<T>) -> Tensor<T> {
    let data = t.re().iter().zip(t.im()).map(|(&r, &i)| (r * r + i * i).sqrt()).collect();
    Tensor::from_vec(t.shape(), data).expect("same shape")
}

/// Sums a real tensor along `axis`, removing it.
pub fn sum_axis<T: Scalar>(t: &Tensor<T>, axis: usize) -> Result<Tensor<T>> {
    let (outer, len, inner) = split_axis(t.shape(), axis)?;
    let mut out = vec![T::zero(); outer * inner];
    let d = t.data();
    for o in 0..outer {
        let dst = &mut out[o * inner..(o + 1) * inner];
        for l in 0..len {
            let src = &d[(o * len + l) * inner..(o * len + l + 1) * inner];
            for (a, &b) in dst.iter_mut().zip(src) {
                *a += b;
            }
        }
    }
    let mut shape = t.shape().to_vec();
    shape.remove(axis);
    Tensor::from_vec(&shape, out)
}

/// Sums a complex tensor along `axis`, removing it.
pub fn sum_axis_complex<T: Scalar>(t: &ComplexTensor<T>, axis: usize) -> Result<ComplexTensor<T>> {
    let mut shape = t.shape().to_vec();
    let re = sum_axis(&Tensor::from_vec(&shape, t.re().to_vec())?, axis)?;
    let im = sum_axis(&Tensor::from_vec(&shape, t.im().to_vec())?, axis)?;
    shape.remove(axis);
    ComplexTensor::from_parts(&shape, re.into_vec(), im.into_vec())
}

/// Repeats `t` along a new axis at position `axis` with length `len`
/// (the adjoint of [`sum_axis`]).
pub(crate) fn broadcast_axis<T: Scalar>(t: &[T], outer: usize, len: usize, inner: usize) -> Vec<T> {
    let mut out = Vec::with_capacity(outer * len * inner);
    for o in 0..outer {
        let src = &t[o * inner..(o + 1) * inner];
        for _ in 0..len {
            out.extend_from_slice(src);
        }
    }
    out
}
