use std::sync::Arc;

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// Splits `shape` around `axis` into (outer, len, inner) extents of a
/// row-major layout.
pub(crate) fn split_axis(shape: &[usize], axis: usize) -> Result<(usize, usize, usize)> {
    if axis >= shape.len() {
        return Err(Error::Index {
            axis,
            rank: shape.len(),
        });
    }
    let outer = numel(&shape[..axis]);
    let inner = numel(&shape[axis + 1..]);
    Ok((outer, shape[axis], inner))
}

/// Dense row-major real tensor. Storage is shared; clones are cheap and
/// mutation copies on write.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<T> {
    shape: Vec<usize>,
    data: Arc<Vec<T>>,
}

impl<T: Scalar> Tensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![T::zero(); numel(shape)]),
        }
    }

    pub fn full(shape: &[usize], v: T) -> Self {
        Self {
            shape: shape.to_vec(),
            data: Arc::new(vec![v; numel(shape)]),
        }
    }

    pub fn scalar(v: T) -> Self {
        Self::from_vec(&[], vec![v]).expect("scalar shape")
    }

    pub fn from_vec(shape: &[usize], data: Vec<T>) -> Result<Self> {
        if data.len() != numel(shape) {
            return Err(Error::Shape(format!(
                "{} values do not fill shape {:?}",
                data.len(),
                shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::new(data),
        })
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[T] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [T] {
        Arc::make_mut(&mut self.data).as_mut_slice()
    }

    pub fn into_vec(self) -> Vec<T> {
        Arc::try_unwrap(self.data).unwrap_or_else(|shared| (*shared).clone())
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.len() {
            return Err(Error::Dimension {
                op: "reshape",
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            data: Arc::clone(&self.data),
        })
    }

    pub fn map(&self, f: impl Fn(T) -> T) -> Self {
        Self {
            shape: self.shape.clone(),
            data: Arc::new(self.data.iter().map(|&v| f(v)).collect()),
        }
    }

    pub fn sum(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a + b)
    }

    pub fn max_abs(&self) -> T {
        self.data.iter().fold(T::zero(), |a, &b| a.max(b.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// `self += other`, shapes must agree in element count.
    pub fn add_assign(&mut self, other: &Tensor<T>) {
        assert_eq!(self.len(), other.len(), "add_assign length mismatch");
        for (a, &b) in self.data_mut().iter_mut().zip(other.data()) {
            *a += b;
        }
    }

    /// Elements at index `i` along `axis` (the axis is removed).
    pub fn select(&self, axis: usize, index: usize) -> Result<Self> {
        let (outer, len, inner) = split_axis(&self.shape, axis)?;
        if index >= len {
            return Err(Error::Index { axis: index, rank: len });
        }
        let mut out = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * len + index) * inner;
            out.extend_from_slice(&self.data[base..base + inner]);
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Self::from_vec(&shape, out)
    }

    pub fn cast<U: Scalar>(&self) -> Tensor<U> {
        Tensor {
            shape: self.shape.clone(),
            data: Arc::new(
                self.data
                    .iter()
                    .map(|v| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan()))
                    .collect(),
            ),
        }
    }
}

/// Dense row-major complex tensor stored as separate real and imaginary planes.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexTensor<T> {
    shape: Vec<usize>,
    re: Arc<Vec<T>>,
    im: Arc<Vec<T>>,
}

impl<T: Scalar> ComplexTensor<T> {
    pub fn zeros(shape: &[usize]) -> Self {
        let n = numel(shape);
        Self {
            shape: shape.to_vec(),
            re: Arc::new(vec![T::zero(); n]),
            im: Arc::new(vec![T::zero(); n]),
        }
    }

    pub fn from_parts(shape: &[usize], re: Vec<T>, im: Vec<T>) -> Result<Self> {
        let n = numel(shape);
        if re.len() != n || im.len() != n {
            return Err(Error::Shape(format!(
                "re/im lengths {}/{} do not fill shape {:?}",
                re.len(),
                im.len(),
                shape
            )));
        }
        Ok(Self {
            shape: shape.to_vec(),
            re: Arc::new(re),
            im: Arc::new(im),
        })
    }

    pub fn from_real(t: &Tensor<T>) -> Self {
        Self {
            shape: t.shape().to_vec(),
            re: Arc::new(t.data().to_vec()),
            im: Arc::new(vec![T::zero(); t.len()]),
        }
    }

    /// Complex identity matrix of size `n`.
    pub fn eye(n: usize) -> Self {
        let mut re = vec![T::zero(); n * n];
        for i in 0..n {
            re[i * n + i] = T::one();
        }
        Self::from_parts(&[n, n], re, vec![T::zero(); n * n]).expect("square shape")
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn rank(&self) -> usize {
        self.shape.len()
    }

    pub fn len(&self) -> usize {
        self.re.len()
    }

    pub fn is_empty(&self) -> bool {
        self.re.is_empty()
    }

    pub fn re(&self) -> &[T] {
        &self.re
    }

    pub fn im(&self) -> &[T] {
        &self.im
    }

    pub fn parts_mut(&mut self) -> (&mut [T], &mut [T]) {
        (
            Arc::make_mut(&mut self.re).as_mut_slice(),
            Arc::make_mut(&mut self.im).as_mut_slice(),
        )
    }

    pub fn into_parts(self) -> (Vec<usize>, Vec<T>, Vec<T>) {
        let re = Arc::try_unwrap(self.re).unwrap_or_else(|s| (*s).clone());
        let im = Arc::try_unwrap(self.im).unwrap_or_else(|s| (*s).clone());
        (self.shape, re, im)
    }

    pub fn get(&self, flat: usize) -> (T, T) {
        (self.re[flat], self.im[flat])
    }

    pub fn reshape(&self, shape: &[usize]) -> Result<Self> {
        if numel(shape) != self.len() {
            return Err(Error::Dimension {
                op: "reshape",
                left: self.shape.clone(),
                right: shape.to_vec(),
            });
        }
        Ok(Self {
            shape: shape.to_vec(),
            re: Arc::clone(&self.re),
            im: Arc::clone(&self.im),
        })
    }

    pub fn is_finite(&self) -> bool {
        self.re.iter().chain(self.im.iter()).all(|v| v.is_finite())
    }

    pub fn energy(&self) -> T {
        self.re
            .iter()
            .zip(self.im.iter())
            .fold(T::zero(), |acc, (&r, &i)| acc + r * r + i * i)
    }

    /// Multiply by a real scalar.
    pub fn scale(&self, c: T) -> Self {
        Self {
            shape: self.shape.clone(),
            re: Arc::new(self.re.iter().map(|&v| v * c).collect()),
            im: Arc::new(self.im.iter().map(|&v| v * c).collect()),
        }
    }

    /// Multiply by a complex scalar `(cr + j ci)`.
    pub fn scale_complex(&self, cr: T, ci: T) -> Self {
        let (re, im) = self
            .re
            .iter()
            .zip(self.im.iter())
            .map(|(&r, &i)| (r * cr - i * ci, r * ci + i * cr))
            .unzip();
        Self {
            shape: self.shape.clone(),
            re: Arc::new(re),
            im: Arc::new(im),
        }
    }

    pub fn add(&self, other: &Self) -> Result<Self> {
        if self.shape != other.shape {
            return Err(Error::Dimension {
                op: "add",
                left: self.shape.clone(),
                right: other.shape.clone(),
            });
        }
        Ok(Self {
            shape: self.shape.clone(),
            re: Arc::new(self.re.iter().zip(other.re.iter()).map(|(&a, &b)| a + b).collect()),
            im: Arc::new(self.im.iter().zip(other.im.iter()).map(|(&a, &b)| a + b).collect()),
        })
    }

    pub fn add_assign(&mut self, other: &Self) {
        assert_eq!(self.len(), other.len(), "add_assign length mismatch");
        let (re, im) = self.parts_mut();
        for (a, &b) in re.iter_mut().zip(other.re.iter()) {
            *a += b;
        }
        for (a, &b) in im.iter_mut().zip(other.im.iter()) {
            *a += b;
        }
    }

    /// Elements at index `i` along `axis` (the axis is removed).
    pub fn select(&self, axis: usize, index: usize) -> Result<Self> {
        let (outer, len, inner) = split_axis(&self.shape, axis)?;
        if index >= len {
            return Err(Error::Index { axis: index, rank: len });
        }
        let mut re = Vec::with_capacity(outer * inner);
        let mut im = Vec::with_capacity(outer * inner);
        for o in 0..outer {
            let base = (o * len + index) * inner;
            re.extend_from_slice(&self.re[base..base + inner]);
            im.extend_from_slice(&self.im[base..base + inner]);
        }
        let mut shape = self.shape.clone();
        shape.remove(axis);
        Self::from_parts(&shape, re, im)
    }

    /// Keeps the first `keep` indices along `axis`.
    pub fn truncate_axis(&self, axis: usize, keep: usize) -> Result<Self> {
        let (outer, len, inner) = split_axis(&self.shape, axis)?;
        if keep > len {
            return Err(Error::Parameter(format!(
                "cannot keep {keep} of {len} entries on axis {axis}"
            )));
        }
        let mut re = Vec::with_capacity(outer * keep * inner);
        let mut im = Vec::with_capacity(outer * keep * inner);
        for o in 0..outer {
            let base = o * len * inner;
            re.extend_from_slice(&self.re[base..base + keep * inner]);
            im.extend_from_slice(&self.im[base..base + keep * inner]);
        }
        let mut shape = self.shape.clone();
        shape[axis] = keep;
        Self::from_parts(&shape, re, im)
    }

    /// General axis permutation: output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Self> {
        let rank = self.rank();
        let mut seen = vec![false; rank];
        if perm.len() != rank || perm.iter().any(|&p| p >= rank || std::mem::replace(&mut seen[p], true)) {
            return Err(Error::Parameter(format!("{perm:?} is not a permutation of rank {rank}")));
        }
        let in_strides = strides(&self.shape);
        let out_shape: Vec<usize> = perm.iter().map(|&p| self.shape[p]).collect();
        let stride_for_out: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
        let n = self.len();
        let mut re = Vec::with_capacity(n);
        let mut im = Vec::with_capacity(n);
        let mut idx = vec![0usize; rank];
        let mut src = 0usize;
        for _ in 0..n {
            re.push(self.re[src]);
            im.push(self.im[src]);
            for d in (0..rank).rev() {
                idx[d] += 1;
                src += stride_for_out[d];
                if idx[d] < out_shape[d] {
                    break;
                }
                src -= stride_for_out[d] * out_shape[d];
                idx[d] = 0;
            }
        }
        Self::from_parts(&out_shape, re, im)
    }

    pub fn cast<U: Scalar>(&self) -> ComplexTensor<U> {
        let conv = |v: &T| U::from_f64(v.to_f64().unwrap_or(f64::NAN)).unwrap_or(U::nan());
        ComplexTensor {
            shape: self.shape.clone(),
            re: Arc::new(self.re.iter().map(conv).collect()),
            im: Arc::new(self.im.iter().map(conv).collect()),
        }
    }
}

pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1usize; shape.len()];
    for d in (0..shape.len().saturating_sub(1)).rev() {
        s[d] = s[d + 1] * shape[d + 1];
    }
    s
}
