//! Real-valued network layers as tape primitives.
//!
//! Feature maps are `[batch, channels, depth, height, width]`; a 2-D layer is
//! the depth-1 case with a kernel of depth 1.

use crate::ctensor::{gemm, Backward, BackwardCtx, Tape, Tensor, Value, Var, View};
use crate::error::{Error, Result};
use crate::scalar::{from_usize, Scalar};

fn dim_err(op: &'static str, left: &[usize], right: &[usize]) -> Error {
    Error::Dimension { op, left: left.to_vec(), right: right.to_vec() }
}

/// Shape bookkeeping of one same-padded stride-1 convolution.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ConvGeom {
    pub cin: usize,
    pub cout: usize,
    pub dims: [usize; 3],
    pub kernel: [usize; 3],
}

impl ConvGeom {
    fn pad(&self, axis: usize) -> usize {
        (self.kernel[axis] - 1) / 2
    }

    fn k(&self) -> usize {
        self.kernel.iter().product()
    }

    fn spatial(&self) -> usize {
        self.dims.iter().product()
    }

    fn rows(&self) -> usize {
        self.cin * self.k()
    }
}

/// Unfolds output rows `r0..r1` (a row is one `(z, y)` line of width `W`)
/// of one sample `[cin, D, H, W]` into `[cin * K, (r1 - r0) * W]`.
fn im2col<T: Scalar>(x: &[T], g: &ConvGeom, r0: usize, r1: usize, cols: &mut [T]) {
    let [_, h, w] = g.dims;
    let d = g.dims[0];
    let [kd, kh, kw] = g.kernel;
    let (pd, ph, pw) = (g.pad(0), g.pad(1), g.pad(2));
    let sp = g.spatial();
    let len = (r1 - r0) * w;
    let mut row = 0;
    for ci in 0..g.cin {
        let xc = &x[ci * sp..(ci + 1) * sp];
        for dz in 0..kd {
            for dy in 0..kh {
                for dx in 0..kw {
                    let dst = &mut cols[row * len..(row + 1) * len];
                    let lo = pw.saturating_sub(dx).min(w);
                    let hi = (w + pw).saturating_sub(dx).min(w).max(lo);
                    for r in r0..r1 {
                        let (z, y) = (r / h, r % h);
                        let out = &mut dst[(r - r0) * w..(r - r0 + 1) * w];
                        let sz = z as isize + dz as isize - pd as isize;
                        let sy = y as isize + dy as isize - ph as isize;
                        if sz < 0 || sz >= d as isize || sy < 0 || sy >= h as isize {
                            out.fill(T::zero());
                            continue;
                        }
                        let base = (sz as usize * h + sy as usize) * w;
                        // x index = out index + dx - pw
                        out[..lo].fill(T::zero());
                        if lo < hi {
                            let shift = base + lo + dx - pw;
                            out[lo..hi].copy_from_slice(&xc[shift..shift + (hi - lo)]);
                        }
                        out[hi..].fill(T::zero());
                    }
                    row += 1;
                }
            }
        }
    }
}

/// Adjoint of [`im2col`] for the same row range: adds `[cin * K, len]`
/// back onto `[cin, D, H, W]`.
fn col2im<T: Scalar>(cols: &[T], g: &ConvGeom, r0: usize, r1: usize, gx: &mut [T]) {
    let [d, h, w] = g.dims;
    let [kd, kh, kw] = g.kernel;
    let (pd, ph, pw) = (g.pad(0), g.pad(1), g.pad(2));
    let sp = g.spatial();
    let len = (r1 - r0) * w;
    let mut row = 0;
    for ci in 0..g.cin {
        let gc = &mut gx[ci * sp..(ci + 1) * sp];
        for dz in 0..kd {
            for dy in 0..kh {
                for dx in 0..kw {
                    let src = &cols[row * len..(row + 1) * len];
                    let lo = pw.saturating_sub(dx).min(w);
                    let hi = (w + pw).saturating_sub(dx).min(w).max(lo);
                    row += 1;
                    if lo >= hi {
                        continue;
                    }
                    for r in r0..r1 {
                        let (z, y) = (r / h, r % h);
                        let sz = z as isize + dz as isize - pd as isize;
                        let sy = y as isize + dy as isize - ph as isize;
                        if sz < 0 || sz >= d as isize || sy < 0 || sy >= h as isize {
                            continue;
                        }
                        let s = &src[(r - r0) * w + lo..(r - r0) * w + hi];
                        let base = (sz as usize * h + sy as usize) * w + lo + dx - pw;
                        for (a, &b) in gc[base..base + (hi - lo)].iter_mut().zip(s) {
                            *a += b;
                        }
                    }
                }
            }
        }
    }
}

/// Output rows per im2col tile, sized so a tile stays cache resident.
fn tile_rows(g: &ConvGeom) -> usize {
    const TILE_VALUES: usize = 1 << 16;
    let per_row = g.rows() * g.dims[2];
    (TILE_VALUES / per_row.max(1)).max(1)
}

/// `[rows, cols]` window starting at `data[0]` inside a matrix with row stride `rs`.
fn strided<T>(data: &[T], rows: usize, cols: usize, rs: usize) -> View<'_, T> {
    View { data, rows, cols, rs, cs: 1 }
}

fn conv_geom<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<ConvGeom> {
    let (xs, ws) = (x.shape(), w.shape());
    if xs.len() != 5 || ws.len() != 5 || xs[1] != ws[1] || b.shape() != [ws[0]] {
        return Err(dim_err("conv", xs, ws));
    }
    if ws[2..].iter().any(|&k| k == 0 || k % 2 == 0) {
        return Err(Error::Shape(format!("conv kernel {:?} must have odd extents", &ws[2..])));
    }
    if xs[2..].iter().any(|&d| d == 0) {
        return Err(Error::Shape(format!("conv input {xs:?} has an empty spatial axis")));
    }
    Ok(ConvGeom {
        cin: ws[1],
        cout: ws[0],
        dims: [xs[2], xs[3], xs[4]],
        kernel: [ws[2], ws[3], ws[4]],
    })
}

struct Conv {
    x: Var,
    w: Var,
    b: Var,
    geom: ConvGeom,
}

impl<T: Scalar> Backward<T> for Conv {
    fn name(&self) -> &'static str {
        "conv"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_real()?;
        let geom = self.geom;
        let x = ctx.value(self.x).as_real()?;
        let w = ctx.value(self.w).as_real()?;
        let (x_shape, w_shape) = (x.shape().to_vec(), w.shape().to_vec());
        let n = x.shape()[0];
        let (sp, rows, cout) = (geom.spatial(), geom.rows(), geom.cout);
        let in_len = geom.cin * sp;
        let mut gw = vec![T::zero(); cout * rows];
        let mut gb = vec![T::zero(); cout];
        let need_x = ctx.needs(self.x);
        let need_w = ctx.needs(self.w);
        let mut gx = if need_x { vec![T::zero(); x.len()] } else { Vec::new() };
        let (lines, w_len) = (geom.dims[0] * geom.dims[1], geom.dims[2]);
        let tile = tile_rows(&geom);
        let mut cols = vec![T::zero(); rows * tile * w_len];
        for s in 0..n {
            let gs = &g.data()[s * cout * sp..(s + 1) * cout * sp];
            for (c, acc) in gb.iter_mut().enumerate() {
                *acc += gs[c * sp..(c + 1) * sp].iter().fold(T::zero(), |a, &v| a + v);
            }
            let xs = &x.data()[s * in_len..(s + 1) * in_len];
            let mut r0 = 0;
            while r0 < lines {
                let r1 = (r0 + tile).min(lines);
                let len = (r1 - r0) * w_len;
                let cols = &mut cols[..rows * len];
                let gtile = strided(&gs[r0 * w_len..], cout, len, sp);
                if need_w {
                    im2col(xs, &geom, r0, r1, cols);
                    // gW += g_tile [cout x len] * cols^T [len x rows]
                    gemm(T::one(), gtile, View::row_major(cols, rows, len).t(), T::one(), &mut gw, rows);
                }
                if need_x {
                    // gcols = W^T [rows x cout] * g_tile [cout x len]
                    gemm(T::one(), View::row_major(w.data(), cout, rows).t(), gtile, T::zero(), cols, len);
                    col2im(cols, &geom, r0, r1, &mut gx[s * in_len..(s + 1) * in_len]);
                }
                r0 = r1;
            }
        }
        if need_x {
            ctx.accumulate(self.x, Tensor::from_vec(&x_shape, gx)?.into())?;
        }
        ctx.accumulate(self.w, Tensor::from_vec(&w_shape, gw)?.into())?;
        ctx.accumulate(self.b, Tensor::from_vec(&[cout], gb)?.into())
    }
}

/// Same-padded, stride-1 cross-correlation. `x: [N, Cin, D, H, W]`,
/// `w: [Cout, Cin, kd, kh, kw]` (odd extents), `b: [Cout]`.
pub fn conv<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let (xv, wv, bv) = (tape.real(x)?, tape.real(w)?, tape.real(b)?);
    let geom = conv_geom(xv, wv, bv)?;
    let n = xv.shape()[0];
    let (sp, rows, cout) = (geom.spatial(), geom.rows(), geom.cout);
    let in_len = geom.cin * sp;
    let mut out = vec![T::zero(); n * cout * sp];
    let (lines, w_len) = (geom.dims[0] * geom.dims[1], geom.dims[2]);
    let tile = tile_rows(&geom);
    let mut cols = vec![T::zero(); rows * tile * w_len];
    for s in 0..n {
        let xs = &xv.data()[s * in_len..(s + 1) * in_len];
        let dst = &mut out[s * cout * sp..(s + 1) * cout * sp];
        for (c, &bias) in bv.data().iter().enumerate() {
            dst[c * sp..(c + 1) * sp].fill(bias);
        }
        let mut r0 = 0;
        while r0 < lines {
            let r1 = (r0 + tile).min(lines);
            let len = (r1 - r0) * w_len;
            let cols = &mut cols[..rows * len];
            im2col(xs, &geom, r0, r1, cols);
            gemm(T::one(), View::row_major(wv.data(), cout, rows), View::row_major(cols, rows, len), T::one(), &mut dst[r0 * w_len..], sp);
            r0 = r1;
        }
    }
    let mut shape = xv.shape().to_vec();
    shape[1] = cout;
    let y = Tensor::from_vec(&shape, out)?;
    Ok(tape.record(y.into(), &[x, w, b], Box::new(Conv { x, w, b, geom })))
}

/// Batch statistics of one normalization layer, for the running averages.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchStats<T> {
    pub mean: Vec<T>,
    /// Unbiased variance (biased when only one value per channel).
    pub var: Vec<T>,
}

pub const BN_EPS: f64 = 1e-5;
pub const BN_MOMENTUM: f64 = 0.1;

struct BatchNorm<T> {
    x: Var,
    gamma: Var,
    beta: Var,
    mean: Vec<T>,
    inv_std: Vec<T>,
    /// Whether `mean`/`inv_std` came from this batch (training mode).
    batch_stats: bool,
}

fn bn_layout(shape: &[usize]) -> (usize, usize, usize) {
    let n = shape[0];
    let c = shape[1];
    let s: usize = shape[2..].iter().product();
    (n, c, s)
}

impl<T: Scalar> Backward<T> for BatchNorm<T> {
    fn name(&self) -> &'static str {
        "batch_norm"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_real()?;
        let x = ctx.value(self.x).as_real()?;
        let gamma = ctx.value(self.gamma).as_real()?.data().to_vec();
        let shape = x.shape().to_vec();
        let (n, c, s) = bn_layout(&shape);
        let m: T = from_usize(n * s);
        let mut sum_g = vec![T::zero(); c];
        let mut sum_gx = vec![T::zero(); c];
        for i in 0..n {
            for ch in 0..c {
                let off = (i * c + ch) * s;
                for j in 0..s {
                    let xhat = (x.data()[off + j] - self.mean[ch]) * self.inv_std[ch];
                    sum_g[ch] += g.data()[off + j];
                    sum_gx[ch] += g.data()[off + j] * xhat;
                }
            }
        }
        if ctx.needs(self.x) {
            let mut gx = vec![T::zero(); x.len()];
            for i in 0..n {
                for ch in 0..c {
                    let off = (i * c + ch) * s;
                    let k = gamma[ch] * self.inv_std[ch];
                    for j in 0..s {
                        let gv = g.data()[off + j];
                        gx[off + j] = if self.batch_stats {
                            let xhat = (x.data()[off + j] - self.mean[ch]) * self.inv_std[ch];
                            k * (gv - (sum_g[ch] + xhat * sum_gx[ch]) / m)
                        } else {
                            k * gv
                        };
                    }
                }
            }
            ctx.accumulate(self.x, Tensor::from_vec(&shape, gx)?.into())?;
        }
        ctx.accumulate(self.gamma, Tensor::from_vec(&[c], sum_gx)?.into())?;
        ctx.accumulate(self.beta, Tensor::from_vec(&[c], sum_g)?.into())
    }
}

/// Batch normalization over every axis but the channel axis 1.
///
/// With `running = None` the batch's own statistics are used and returned;
/// with `Some((mean, var))` those fixed statistics are used (inference).
pub fn batch_norm<T: Scalar>(
    tape: &mut Tape<T>,
    x: Var,
    gamma: Var,
    beta: Var,
    running: Option<(&[T], &[T])>,
) -> Result<(Var, Option<BatchStats<T>>)> {
    let xv = tape.real(x)?;
    let shape = xv.shape().to_vec();
    if shape.len() < 2 {
        return Err(Error::Shape(format!("batch norm needs [N, C, ...], got {shape:?}")));
    }
    let (n, c, s) = bn_layout(&shape);
    let (gv, bv) = (tape.real(gamma)?, tape.real(beta)?);
    if gv.shape() != [c] || bv.shape() != [c] {
        return Err(dim_err("batch_norm", &shape, gv.shape()));
    }
    let eps: T = crate::scalar::lit(BN_EPS);
    let count = n * s;
    let (mean, var_biased, stats) = match running {
        Some((rm, rv)) => {
            if rm.len() != c || rv.len() != c {
                return Err(dim_err("batch_norm running stats", &shape, &[rm.len()]));
            }
            (rm.to_vec(), rv.to_vec(), None)
        }
        None => {
            if count == 0 {
                return Err(Error::Shape(format!("batch norm over empty batch {shape:?}")));
            }
            let mut mean = vec![T::zero(); c];
            let mut var = vec![T::zero(); c];
            for i in 0..n {
                for ch in 0..c {
                    let off = (i * c + ch) * s;
                    mean[ch] += xv.data()[off..off + s].iter().fold(T::zero(), |a, &v| a + v);
                }
            }
            let mf: T = from_usize(count);
            for mu in mean.iter_mut() {
                *mu /= mf;
            }
            for i in 0..n {
                for ch in 0..c {
                    let off = (i * c + ch) * s;
                    var[ch] += xv.data()[off..off + s]
                        .iter()
                        .fold(T::zero(), |a, &v| a + (v - mean[ch]) * (v - mean[ch]));
                }
            }
            for v in var.iter_mut() {
                *v /= mf;
            }
            let unbiased = if count > 1 {
                let k: T = mf / from_usize::<T>(count - 1);
                var.iter().map(|&v| v * k).collect()
            } else {
                var.clone()
            };
            let stats = BatchStats { mean: mean.clone(), var: unbiased };
            (mean, var, Some(stats))
        }
    };
    let inv_std: Vec<T> = var_biased.iter().map(|&v| T::one() / (v + eps).sqrt()).collect();
    let mut out = vec![T::zero(); xv.len()];
    for i in 0..n {
        for ch in 0..c {
            let off = (i * c + ch) * s;
            let (gm, bt) = (gv.data()[ch], bv.data()[ch]);
            for j in 0..s {
                out[off + j] = gm * (xv.data()[off + j] - mean[ch]) * inv_std[ch] + bt;
            }
        }
    }
    let y = Tensor::from_vec(&shape, out)?;
    let op = BatchNorm { x, gamma, beta, mean, inv_std, batch_stats: running.is_none() };
    Ok((tape.record(y.into(), &[x, gamma, beta], Box::new(op)), stats))
}

/// Folds batch statistics into running averages with momentum [`BN_MOMENTUM`].
pub fn update_running<T: Scalar>(running_mean: &mut [T], running_var: &mut [T], stats: &BatchStats<T>) {
    let mom: T = crate::scalar::lit(BN_MOMENTUM);
    let keep = T::one() - mom;
    for (r, &b) in running_mean.iter_mut().zip(&stats.mean) {
        *r = keep * *r + mom * b;
    }
    for (r, &b) in running_var.iter_mut().zip(&stats.var) {
        *r = keep * *r + mom * b;
    }
}

struct MaxPool {
    x: Var,
    argmax: Vec<usize>,
}

impl<T: Scalar> Backward<T> for MaxPool {
    fn name(&self) -> &'static str {
        "max_pool"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_real()?;
        let shape = ctx.value(self.x).shape().to_vec();
        let mut gx = vec![T::zero(); shape.iter().product()];
        for (&src, &gv) in self.argmax.iter().zip(g.data()) {
            gx[src] += gv;
        }
        ctx.accumulate(self.x, Tensor::from_vec(&shape, gx)?.into())
    }
}

/// Non-overlapping max pooling of `[N, C, D, H, W]` with per-axis window
/// `factor` (odd remainders are dropped).
pub fn max_pool<T: Scalar>(tape: &mut Tape<T>, x: Var, factor: [usize; 3]) -> Result<Var> {
    let xv = tape.real(x)?;
    let shape = xv.shape().to_vec();
    if shape.len() != 5 || factor.iter().any(|&f| f == 0) {
        return Err(dim_err("max_pool", &shape, &factor));
    }
    let (n, c) = (shape[0], shape[1]);
    let [d, h, w] = [shape[2], shape[3], shape[4]];
    let out_dims = [d / factor[0], h / factor[1], w / factor[2]];
    if out_dims.iter().any(|&o| o == 0) {
        return Err(Error::Shape(format!("pooling {factor:?} empties feature map {shape:?}")));
    }
    let [od, oh, ow] = out_dims;
    let mut out = Vec::with_capacity(n * c * od * oh * ow);
    let mut argmax = Vec::with_capacity(out.capacity());
    let data = xv.data();
    for nc in 0..n * c {
        let base = nc * d * h * w;
        for z in 0..od {
            for y in 0..oh {
                for xx in 0..ow {
                    let mut best = T::neg_infinity();
                    let mut best_i = base;
                    for dz in 0..factor[0] {
                        for dy in 0..factor[1] {
                            for dx in 0..factor[2] {
                                let i = base
                                    + ((z * factor[0] + dz) * h + y * factor[1] + dy) * w
                                    + xx * factor[2]
                                    + dx;
                                // First maximum wins on ties.
                                if data[i] > best {
                                    best = data[i];
                                    best_i = i;
                                }
                            }
                        }
                    }
                    out.push(best);
                    argmax.push(best_i);
                }
            }
        }
    }
    let y = Tensor::from_vec(&[n, c, od, oh, ow], out)?;
    Ok(tape.record(y.into(), &[x], Box::new(MaxPool { x, argmax })))
}

struct Dense {
    x: Var,
    w: Var,
    b: Var,
}

impl<T: Scalar> Backward<T> for Dense {
    fn name(&self) -> &'static str {
        "dense"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_real()?;
        let x = ctx.value(self.x).as_real()?;
        let w = ctx.value(self.w).as_real()?;
        let (n, i) = (x.shape()[0], x.shape()[1]);
        let o = w.shape()[0];
        let mut gb = vec![T::zero(); o];
        for row in g.data().chunks_exact(o) {
            for (a, &v) in gb.iter_mut().zip(row) {
                *a += v;
            }
        }
        let gx = if ctx.needs(self.x) {
            let mut gx = vec![T::zero(); n * i];
            gemm(T::one(), View::row_major(g.data(), n, o), View::row_major(w.data(), o, i), T::zero(), &mut gx, i);
            Some(Tensor::from_vec(&[n, i], gx)?)
        } else {
            None
        };
        let gw = if ctx.needs(self.w) {
            let mut gw = vec![T::zero(); o * i];
            gemm(
                T::one(),
                View::row_major(g.data(), n, o).t(),
                View::row_major(x.data(), n, i),
                T::zero(),
                &mut gw,
                i,
            );
            Some(Tensor::from_vec(&[o, i], gw)?)
        } else {
            None
        };
        if let Some(gx) = gx {
            ctx.accumulate(self.x, gx.into())?;
        }
        if let Some(gw) = gw {
            ctx.accumulate(self.w, gw.into())?;
        }
        ctx.accumulate(self.b, Tensor::from_vec(&[o], gb)?.into())
    }
}

/// `y = x W^T + b` for `x: [N, I]`, `w: [O, I]`, `b: [O]`.
pub fn dense<T: Scalar>(tape: &mut Tape<T>, x: Var, w: Var, b: Var) -> Result<Var> {
    let (xv, wv, bv) = (tape.real(x)?, tape.real(w)?, tape.real(b)?);
    if xv.rank() != 2 || wv.rank() != 2 || xv.shape()[1] != wv.shape()[1] || bv.shape() != [wv.shape()[0]] {
        return Err(dim_err("dense", xv.shape(), wv.shape()));
    }
    let (n, i, o) = (xv.shape()[0], xv.shape()[1], wv.shape()[0]);
    let mut out: Vec<T> = (0..n).flat_map(|_| bv.data().iter().copied()).collect();
    gemm(T::one(), View::row_major(xv.data(), n, i), View::row_major(wv.data(), o, i).t(), T::one(), &mut out, o);
    let y = Tensor::from_vec(&[n, o], out)?;
    Ok(tape.record(y.into(), &[x, w, b], Box::new(Dense { x, w, b })))
}

fn sigmoid<T: Scalar>(v: T) -> T {
    T::one() / (T::one() + (-v).exp())
}

/// Saved activations of one LSTM time step for every batch row.
struct LstmStep<T> {
    /// Gate activations `[N, 4H]` in order i, f, g, o.
    gates: Vec<T>,
    c: Vec<T>,
    h_prev: Vec<T>,
    c_prev: Vec<T>,
}

struct Lstm<T> {
    x: Var,
    w_ih: Var,
    w_hh: Var,
    b: Var,
    steps: Vec<LstmStep<T>>,
}

impl<T: Scalar> Backward<T> for Lstm<T> {
    fn name(&self) -> &'static str {
        "lstm"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let g = g.as_real()?;
        let x = ctx.value(self.x).as_real()?;
        let w_ih = ctx.value(self.w_ih).as_real()?;
        let w_hh = ctx.value(self.w_hh).as_real()?;
        let (n, t_len, input) = (x.shape()[0], x.shape()[1], x.shape()[2]);
        let h4 = w_hh.shape()[0];
        let hid = h4 / 4;
        let mut dh = g.data().to_vec();
        let mut dc = vec![T::zero(); n * hid];
        // Pre-activation gradients for every step, laid out like `x`: [N, T, 4H].
        let mut da_all = vec![T::zero(); n * t_len * h4];
        let mut gw_hh = vec![T::zero(); h4 * hid];
        let mut gb = vec![T::zero(); h4];
        let mut da = vec![T::zero(); n * h4];
        for t in (0..t_len).rev() {
            let st = &self.steps[t];
            for r in 0..n {
                for k in 0..hid {
                    let gi = r * h4;
                    let (i, f, gg, o) = (
                        st.gates[gi + k],
                        st.gates[gi + hid + k],
                        st.gates[gi + 2 * hid + k],
                        st.gates[gi + 3 * hid + k],
                    );
                    let idx = r * hid + k;
                    let tc = st.c[idx].tanh();
                    let d_h = dh[idx];
                    let d_o = d_h * tc;
                    let d_c = dc[idx] + d_h * o * (T::one() - tc * tc);
                    let d_i = d_c * gg;
                    let d_g = d_c * i;
                    let d_f = d_c * st.c_prev[idx];
                    dc[idx] = d_c * f;
                    da[gi + k] = d_i * i * (T::one() - i);
                    da[gi + hid + k] = d_f * f * (T::one() - f);
                    da[gi + 2 * hid + k] = d_g * (T::one() - gg * gg);
                    da[gi + 3 * hid + k] = d_o * o * (T::one() - o);
                }
            }
            for r in 0..n {
                let src = &da[r * h4..(r + 1) * h4];
                da_all[(r * t_len + t) * h4..(r * t_len + t + 1) * h4].copy_from_slice(src);
                for (a, &v) in gb.iter_mut().zip(src) {
                    *a += v;
                }
            }
            // gW_hh += da^T [4H x N] * h_prev [N x H]
            gemm(
                T::one(),
                View::row_major(&da, n, h4).t(),
                View::row_major(&st.h_prev, n, hid),
                T::one(),
                &mut gw_hh,
                hid,
            );
            // dh_prev = da [N x 4H] * W_hh [4H x H]
            gemm(T::one(), View::row_major(&da, n, h4), View::row_major(w_hh.data(), h4, hid), T::zero(), &mut dh, hid);
        }
        let rows = n * t_len;
        let shape = x.shape().to_vec();
        let gx = if ctx.needs(self.x) {
            let mut gx = vec![T::zero(); rows * input];
            gemm(
                T::one(),
                View::row_major(&da_all, rows, h4),
                View::row_major(w_ih.data(), h4, input),
                T::zero(),
                &mut gx,
                input,
            );
            Some(Tensor::from_vec(&shape, gx)?)
        } else {
            None
        };
        let gw_ih = if ctx.needs(self.w_ih) {
            let mut gw_ih = vec![T::zero(); h4 * input];
            gemm(
                T::one(),
                View::row_major(&da_all, rows, h4).t(),
                View::row_major(x.data(), rows, input),
                T::zero(),
                &mut gw_ih,
                input,
            );
            Some(Tensor::from_vec(&[h4, input], gw_ih)?)
        } else {
            None
        };
        if let Some(gx) = gx {
            ctx.accumulate(self.x, gx.into())?;
        }
        if let Some(gw) = gw_ih {
            ctx.accumulate(self.w_ih, gw.into())?;
        }
        ctx.accumulate(self.w_hh, Tensor::from_vec(&[h4, hid], gw_hh)?.into())?;
        ctx.accumulate(self.b, Tensor::from_vec(&[h4], gb)?.into())
    }
}

/// Runs the recurrence and returns the final `(h, c)` plus saved steps.
#[allow(clippy::type_complexity)]
fn lstm_run<T: Scalar>(
    x: &Tensor<T>,
    w_ih: &Tensor<T>,
    w_hh: &Tensor<T>,
    b: &Tensor<T>,
    init: Option<(&[T], &[T])>,
) -> Result<(Vec<T>, Vec<T>, Vec<LstmStep<T>>)> {
    if x.rank() != 3 || x.shape()[1] == 0 {
        return Err(Error::Shape(format!("LSTM input must be a nonempty [N, T, I], got {:?}", x.shape())));
    }
    let (n, t_len, input) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let h4 = w_ih.shape().first().copied().unwrap_or(0);
    let hid = h4 / 4;
    if h4 == 0
        || h4 % 4 != 0
        || w_ih.shape() != [h4, input]
        || w_hh.shape() != [h4, hid]
        || b.shape() != [h4]
    {
        return Err(dim_err("lstm", x.shape(), w_ih.shape()));
    }
    let rows = n * t_len;
    // Input projections for all steps at once: [N*T, 4H].
    let mut xw = vec![T::zero(); rows * h4];
    gemm(T::one(), View::row_major(x.data(), rows, input), View::row_major(w_ih.data(), h4, input).t(), T::zero(), &mut xw, h4);
    let (mut h, mut c) = match init {
        Some((h0, c0)) => {
            if h0.len() != n * hid || c0.len() != n * hid {
                return Err(dim_err("lstm initial state", &[n, hid], &[h0.len()]));
            }
            (h0.to_vec(), c0.to_vec())
        }
        None => (vec![T::zero(); n * hid], vec![T::zero(); n * hid]),
    };
    let mut steps = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let mut gates = vec![T::zero(); n * h4];
        for r in 0..n {
            let src = &xw[(r * t_len + t) * h4..(r * t_len + t + 1) * h4];
            for ((gv, &a), &bb) in gates[r * h4..(r + 1) * h4].iter_mut().zip(src).zip(b.data()) {
                *gv = a + bb;
            }
        }
        gemm(T::one(), View::row_major(&h, n, hid), View::row_major(w_hh.data(), h4, hid).t(), T::one(), &mut gates, h4);
        let h_prev = h.clone();
        let c_prev = c.clone();
        for r in 0..n {
            let gi = r * h4;
            for k in 0..hid {
                let i = sigmoid(gates[gi + k]);
                let f = sigmoid(gates[gi + hid + k]);
                let gg = gates[gi + 2 * hid + k].tanh();
                let o = sigmoid(gates[gi + 3 * hid + k]);
                gates[gi + k] = i;
                gates[gi + hid + k] = f;
                gates[gi + 2 * hid + k] = gg;
                gates[gi + 3 * hid + k] = o;
                let idx = r * hid + k;
                c[idx] = f * c_prev[idx] + i * gg;
                h[idx] = o * c[idx].tanh();
            }
        }
        steps.push(LstmStep { gates, c: c.clone(), h_prev, c_prev });
    }
    Ok((h, c, steps))
}

/// LSTM over `x: [N, T, I]` with gates ordered i, f, g, o in
/// `w_ih: [4H, I]`, `w_hh: [4H, H]` and one bias `b: [4H]`; zero initial
/// state. Returns the last hidden state `[N, H]`.
pub fn lstm<T: Scalar>(tape: &mut Tape<T>, x: Var, w_ih: Var, w_hh: Var, b: Var) -> Result<Var> {
    let (h, _, steps) = lstm_run(tape.real(x)?, tape.real(w_ih)?, tape.real(w_hh)?, tape.real(b)?, None)?;
    let n = tape.real(x)?.shape()[0];
    let hid = h.len() / n.max(1);
    let y = Tensor::from_vec(&[n, hid], h)?;
    Ok(tape.record(y.into(), &[x, w_ih, w_hh, b], Box::new(Lstm { x, w_ih, w_hh, b, steps })))
}

/// Value-level LSTM for a single sequence `[T, I]` with an explicit initial
/// state; returns the final `(h, c)`.
pub fn lstm_forward<T: Scalar>(
    seq: &Tensor<T>,
    w_ih: &Tensor<T>,
    w_hh: &Tensor<T>,
    b: &Tensor<T>,
    h0: &[T],
    c0: &[T],
) -> Result<(Vec<T>, Vec<T>)> {
    if seq.rank() != 2 {
        return Err(Error::Shape(format!("sequence must be [T, I], got {:?}", seq.shape())));
    }
    let x = seq.reshape(&[1, seq.shape()[0], seq.shape()[1]])?;
    let (h, c, _) = lstm_run(&x, w_ih, w_hh, b, Some((h0, c0)))?;
    Ok((h, c))
}

struct CrossEntropy<T> {
    logits: Var,
    probs: Vec<T>,
    labels: Vec<usize>,
}

impl<T: Scalar> Backward<T> for CrossEntropy<T> {
    fn name(&self) -> &'static str {
        "cross_entropy"
    }

    fn backward(&self, ctx: &mut BackwardCtx<'_, T>, g: &Value<T>) -> Result<()> {
        let scale = g.as_real()?.data()[0] / from_usize::<T>(self.labels.len());
        let k = self.probs.len() / self.labels.len();
        let mut gl = self.probs.clone();
        for (r, &label) in self.labels.iter().enumerate() {
            gl[r * k + label] -= T::one();
        }
        for v in gl.iter_mut() {
            *v *= scale;
        }
        let shape = ctx.value(self.logits).shape().to_vec();
        ctx.accumulate(self.logits, Tensor::from_vec(&shape, gl)?.into())
    }
}

/// Row-wise softmax of `[N, K]` logits.
pub fn softmax<T: Scalar>(logits: &Tensor<T>) -> Result<Tensor<T>> {
    if logits.rank() != 2 {
        return Err(Error::Shape(format!("softmax needs [N, K], got {:?}", logits.shape())));
    }
    let k = logits.shape()[1];
    let mut out = logits.data().to_vec();
    for row in out.chunks_exact_mut(k) {
        let mx = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
        let mut sum = T::zero();
        for v in row.iter_mut() {
            *v = (*v - mx).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    Tensor::from_vec(logits.shape(), out)
}

/// Per-row losses `-log softmax(logits)[label]`.
pub fn cross_entropy_rows<T: Scalar>(logits: &Tensor<T>, labels: &[usize]) -> Result<Vec<T>> {
    if logits.rank() != 2 || logits.shape()[0] != labels.len() {
        return Err(dim_err("cross_entropy", logits.shape(), &[labels.len()]));
    }
    let k = logits.shape()[1];
    labels
        .iter()
        .zip(logits.data().chunks_exact(k))
        .map(|(&label, row)| {
            if label >= k {
                return Err(Error::Parameter(format!("label {label} is not below {k} classes")));
            }
            let mx = row.iter().fold(T::neg_infinity(), |a, &v| a.max(v));
            let lse = mx + row.iter().fold(T::zero(), |a, &v| a + (v - mx).exp()).ln();
            Ok(lse - row[label])
        })
        .collect()
}

/// Mean cross-entropy of `[N, K]` logits against `labels`, as a scalar.
pub fn cross_entropy<T: Scalar>(tape: &mut Tape<T>, logits: Var, labels: &[usize]) -> Result<Var> {
    let lv = tape.real(logits)?;
    let rows = cross_entropy_rows(lv, labels)?;
    if rows.is_empty() {
        return Err(Error::Shape("cross entropy over an empty batch".into()));
    }
    let mean = rows.iter().fold(T::zero(), |a, &v| a + v) / from_usize::<T>(rows.len());
    let probs = softmax(lv)?.into_vec();
    let op = CrossEntropy { logits, probs, labels: labels.to_vec() };
    Ok(tape.record(Tensor::scalar(mean).into(), &[logits], Box::new(op)))
}
