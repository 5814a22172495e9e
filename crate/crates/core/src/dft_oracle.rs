//! Classical DFT processing chain.
//!
//! [`preprocess_dft`] evaluates every transform as an explicit O(N^2) sum
//! with plain index loops; it is the reference the learnable front-end is
//! checked against and shares no kernel with it. [`preprocess_fft`] produces
//! the same heatmaps through `rustfft` and is what the frozen-DFT baseline
//! runs at training and benchmark time.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::ctensor::{ComplexTensor, Tensor};
use crate::error::{Error, Result};
use crate::radar_sim::RawDataCube;
use crate::scalar::{lit, Scalar};

/// Data-cube slicing and pre-processing combinations.
///
/// | kind | slice                       | output (per sample)          |
/// |------|-----------------------------|------------------------------|
/// | RT   | first antenna, first chirp  | `[frames, range]`            |
/// | DT   | first antenna, range summed | `[frames, doppler]`          |
/// | AT   | first chirp, range summed   | `[frames, angle]`            |
/// | RDT  | first antenna               | `[frames, range, doppler]`   |
/// | RAT  | first chirp                 | `[frames, range, angle]`     |
/// | DAT  | whole cube, range summed    | `[frames, doppler, angle]`   |
/// | RDAT | whole cube                  | `[frames, range, doppler, angle]` |
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SlicingKind {
    RT,
    DT,
    AT,
    RDT,
    RAT,
    DAT,
    RDAT,
}

impl SlicingKind {
    pub const ALL: [SlicingKind; 7] = [
        SlicingKind::RT,
        SlicingKind::DT,
        SlicingKind::AT,
        SlicingKind::RDT,
        SlicingKind::RAT,
        SlicingKind::DAT,
        SlicingKind::RDAT,
    ];

    pub fn uses_doppler(self) -> bool {
        matches!(self, SlicingKind::DT | SlicingKind::RDT | SlicingKind::DAT | SlicingKind::RDAT)
    }

    pub fn uses_angle(self) -> bool {
        matches!(self, SlicingKind::AT | SlicingKind::RAT | SlicingKind::DAT | SlicingKind::RDAT)
    }

    /// Whether magnitudes are summed over range bins.
    pub fn aggregates_range(self) -> bool {
        matches!(self, SlicingKind::DT | SlicingKind::AT | SlicingKind::DAT)
    }

    /// Keeps only antenna 0 when the angle axis is unused, only chirp 0 when
    /// the Doppler axis is unused.
    pub fn keeps_all_antennas(self) -> bool {
        self.uses_angle()
    }

    pub fn keeps_all_chirps(self) -> bool {
        self.uses_doppler()
    }

    /// Rank of the per-sample heatmap, frame axis included.
    pub fn output_rank(self) -> usize {
        match self {
            SlicingKind::RT | SlicingKind::DT | SlicingKind::AT => 2,
            SlicingKind::RDT | SlicingKind::RAT | SlicingKind::DAT => 3,
            SlicingKind::RDAT => 4,
        }
    }

    /// Whether full-size cubes are halved along the sample and chirp axes to fit the memory budget.
    pub fn default_half_input(self) -> bool {
        matches!(self, SlicingKind::DAT | SlicingKind::RDAT)
    }

    pub fn label(self) -> &'static str {
        match self {
            SlicingKind::RT => "RT",
            SlicingKind::DT => "DT",
            SlicingKind::AT => "AT",
            SlicingKind::RDT => "RDT",
            SlicingKind::RAT => "RAT",
            SlicingKind::DAT => "DAT",
            SlicingKind::RDAT => "RDAT",
        }
    }

    /// Per-sample heatmap shape for a cube `[frames, antennas, chirps, samples]`.
    pub fn output_shape(self, cube: [usize; 4], angle_out: usize) -> Vec<usize> {
        let [f, _, c, s] = cube;
        match self {
            SlicingKind::RT => vec![f, s],
            SlicingKind::DT => vec![f, c],
            SlicingKind::AT => vec![f, angle_out],
            SlicingKind::RDT => vec![f, s, c],
            SlicingKind::RAT => vec![f, s, angle_out],
            SlicingKind::DAT => vec![f, c, angle_out],
            SlicingKind::RDAT => vec![f, s, c, angle_out],
        }
    }
}

impl fmt::Display for SlicingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for SlicingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_uppercase();
        SlicingKind::ALL
            .into_iter()
            .find(|k| k.label() == norm)
            .ok_or_else(|| Error::Config(format!("unknown slicing kind '{s}'")))
    }
}

/// How range bins are collapsed for the range-aggregated kinds.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RangeAggregation {
    /// Sum of magnitudes after the modulus.
    #[default]
    Magnitude,
    /// Complex sum before the modulus.
    Complex,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct HeatmapOptions {
    pub angle_out: usize,
    pub aggregation: RangeAggregation,
}

impl Default for HeatmapOptions {
    fn default() -> Self {
        Self {
            angle_out: 64,
            aggregation: RangeAggregation::Magnitude,
        }
    }
}

/// `[N x M]` DFT matrix, entry `(a, b) = exp(-j 2 pi a b / N)`. With `shifted`
/// the rows are rotated so zero frequency sits at row `N / 2`.
pub fn dft_matrix<T: Scalar>(m: usize, n: usize, shifted: bool) -> Result<ComplexTensor<T>> {
    if m == 0 || n < m {
        return Err(Error::Parameter(format!("DFT output size {n} must be >= input size {m} >= 1")));
    }
    let mut re = Vec::with_capacity(n * m);
    let mut im = Vec::with_capacity(n * m);
    for row in 0..n {
        let a = if shifted { (row + n - n / 2) % n } else { row };
        for b in 0..m {
            // Reduce the exponent modulo N before scaling to keep large
            // products exact.
            let k = (a * b) % n;
            let theta = -2.0 * PI * k as f64 / n as f64;
            re.push(lit(theta.cos()));
            im.push(lit(theta.sin()));
        }
    }
    ComplexTensor::from_parts(&[n, m], re, im)
}

/// Keeps the first `frac * len` entries of the sample and chirp axes.
pub fn reduce_input<T: Scalar>(cube: &RawDataCube<T>, sample_frac: f64, chirp_frac: f64) -> Result<RawDataCube<T>> {
    let [_, _, nc, ns] = cube.shape();
    let keep = |frac: f64, len: usize, what: &str| -> Result<usize> {
        if !(frac > 0.0 && frac <= 1.0) {
            return Err(Error::Parameter(format!("{what} fraction {frac} outside (0, 1]")));
        }
        let exact = frac * len as f64;
        let k = exact.round();
        if (exact - k).abs() > 1e-9 || k < 1.0 {
            return Err(Error::Parameter(format!("{what} fraction {frac} of {len} is not a whole count")));
        }
        Ok(k as usize)
    };
    let ks = keep(sample_frac, ns, "sample")?;
    let kc = keep(chirp_frac, nc, "chirp")?;
    let data = cube.data.truncate_axis(3, ks)?.truncate_axis(2, kc)?;
    RawDataCube::new(data, cube.label)
}

/// Dense 4-axis complex buffer with explicit index arithmetic.
struct Grid<T> {
    dims: [usize; 4],
    re: Vec<T>,
    im: Vec<T>,
}

impl<T: Scalar> Grid<T> {
    fn idx(&self, i: [usize; 4]) -> usize {
        ((i[0] * self.dims[1] + i[1]) * self.dims[2] + i[2]) * self.dims[3] + i[3]
    }

    /// out[.., k, ..] = sum_m w[k, m] in[.., m, ..] on `axis`, as nested loops.
    fn transform(&self, axis: usize, w: &ComplexTensor<T>) -> Grid<T> {
        let (n_out, n_in) = (w.shape()[0], w.shape()[1]);
        assert_eq!(self.dims[axis], n_in);
        let mut dims = self.dims;
        dims[axis] = n_out;
        let total = dims.iter().product();
        let mut out = Grid { dims, re: vec![T::zero(); total], im: vec![T::zero(); total] };
        for i0 in 0..dims[0] {
            for i1 in 0..dims[1] {
                for i2 in 0..dims[2] {
                    for i3 in 0..dims[3] {
                        let o = [i0, i1, i2, i3];
                        let k = o[axis];
                        let (mut sr, mut si) = (T::zero(), T::zero());
                        for m in 0..n_in {
                            let mut src = o;
                            src[axis] = m;
                            let s = self.idx(src);
                            let (xr, xi) = (self.re[s], self.im[s]);
                            let (wr, wi) = (w.re()[k * n_in + m], w.im()[k * n_in + m]);
                            sr += wr * xr - wi * xi;
                            si += wr * xi + wi * xr;
                        }
                        let d = out.idx(o);
                        out.re[d] = sr;
                        out.im[d] = si;
                    }
                }
            }
        }
        out
    }
}

fn validate_cube<T: Scalar>(cube: &RawDataCube<T>, opts: &HeatmapOptions, kind: SlicingKind) -> Result<()> {
    let [f, a, c, s] = cube.shape();
    if f == 0 || a == 0 || c == 0 || s == 0 {
        return Err(Error::Shape(format!("empty cube {:?}", cube.shape())));
    }
    if kind.uses_angle() && opts.angle_out < a {
        return Err(Error::Shape(format!(
            "{kind}: angle output {} is smaller than {a} antennas",
            opts.angle_out
        )));
    }
    Ok(())
}

/// Reference heatmap of `kind` computed with O(N^2) loops.
pub fn preprocess_dft<T: Scalar>(cube: &RawDataCube<T>, kind: SlicingKind, opts: &HeatmapOptions) -> Result<Tensor<T>> {
    validate_cube(cube, opts, kind)?;
    let [nf, na, nc, ns] = cube.shape();
    let ka = if kind.keeps_all_antennas() { na } else { 1 };
    let kc = if kind.keeps_all_chirps() { nc } else { 1 };

    // Slice into [frame, antenna, chirp, sample].
    let mut grid = Grid { dims: [nf, ka, kc, ns], re: Vec::new(), im: Vec::new() };
    for f in 0..nf {
        for a in 0..ka {
            for c in 0..kc {
                for s in 0..ns {
                    let src = ((f * na + a) * nc + c) * ns + s;
                    grid.re.push(cube.data.re()[src]);
                    grid.im.push(cube.data.im()[src]);
                }
            }
        }
    }
    grid = grid.transform(3, &dft_matrix(ns, ns, false)?);
    if kind.uses_doppler() {
        grid = grid.transform(2, &dft_matrix(nc, nc, true)?);
    }
    if kind.uses_angle() {
        grid = grid.transform(1, &dft_matrix(na, opts.angle_out, true)?);
    }
    // grid axes: [frame, angle|1, doppler|1, range]
    let [gf, ga, gd, gr] = grid.dims;
    let complex_sum = kind.aggregates_range() && opts.aggregation == RangeAggregation::Complex;
    let out_shape = kind.output_shape([nf, na, nc, ns], opts.angle_out);
    let mut out = vec![T::zero(); out_shape.iter().product()];
    for f in 0..gf {
        for a in 0..ga {
            for d in 0..gd {
                let (mut cr, mut ci) = (T::zero(), T::zero());
                for r in 0..gr {
                    let i = grid.idx([f, a, d, r]);
                    let (xr, xi) = (grid.re[i], grid.im[i]);
                    let dst = match kind {
                        SlicingKind::RT => f * gr + r,
                        SlicingKind::DT => f * gd + d,
                        SlicingKind::AT => f * ga + a,
                        SlicingKind::RDT => (f * gr + r) * gd + d,
                        SlicingKind::RAT => (f * gr + r) * ga + a,
                        SlicingKind::DAT => (f * gd + d) * ga + a,
                        SlicingKind::RDAT => ((f * gr + r) * gd + d) * ga + a,
                    };
                    if complex_sum {
                        cr += xr;
                        ci += xi;
                        if r + 1 == gr {
                            out[dst] = cr.hypot(ci);
                        }
                    } else {
                        out[dst] += xr.hypot(xi);
                    }
                }
            }
        }
    }
    Tensor::from_vec(&out_shape, out)
}

/// Same heatmaps as [`preprocess_dft`] through FFTs (zero-padded for the
/// angle axis, rotated for Doppler and angle).
pub fn preprocess_fft<T: Scalar>(cube: &RawDataCube<T>, kind: SlicingKind, opts: &HeatmapOptions) -> Result<Tensor<T>> {
    preprocess_fft_as(cube, kind, opts)
}

/// [`preprocess_fft`] with the heatmap in another scalar type. The
/// transforms run in f64 either way, so an f32 cube needs no widening copy.
pub fn preprocess_fft_as<U: Scalar, T: Scalar>(cube: &RawDataCube<T>, kind: SlicingKind, opts: &HeatmapOptions) -> Result<Tensor<U>> {
    validate_cube(cube, opts, kind)?;
    let [nf, na, nc, ns] = cube.shape();
    let ka = if kind.keeps_all_antennas() { na } else { 1 };
    let kc = if kind.keeps_all_chirps() { nc } else { 1 };
    let nq = if kind.uses_angle() { opts.angle_out } else { 1 };

    let mut planner = FftPlanner::<f64>::new();
    let fft_r = planner.plan_fft_forward(ns);
    let fft_d = planner.plan_fft_forward(nc);
    let fft_a = planner.plan_fft_forward(opts.angle_out.max(1));

    let mut range_rows = vec![Complex::new(0.0f64, 0.0); nf * ka * kc * ns];
    for f in 0..nf {
        for a in 0..ka {
            for c in 0..kc {
                let src = ((f * na + a) * nc + c) * ns;
                let dst = ((f * ka + a) * kc + c) * ns;
                for s in 0..ns {
                    let (r, i) = (cube.data.re()[src + s], cube.data.im()[src + s]);
                    range_rows[dst + s] = Complex::new(r.to_f64().unwrap_or(f64::NAN), i.to_f64().unwrap_or(f64::NAN));
                }
            }
        }
    }
    fft_r.process(&mut range_rows);

    let complex_sum = kind.aggregates_range() && opts.aggregation == RangeAggregation::Complex;
    let out_shape = kind.output_shape([nf, na, nc, ns], opts.angle_out);
    let mut out = vec![0.0f64; out_shape.iter().product()];
    // complex-sum aggregation needs the range sum before the modulus
    let mut acc = if complex_sum { vec![Complex::new(0.0f64, 0.0); out.len()] } else { Vec::new() };
    let (gq, gd, gr) = (nq, kc, ns);
    let index = |f: usize, q: usize, d: usize, r: usize| match kind {
        SlicingKind::RT => f * gr + r,
        SlicingKind::DT => f * gd + d,
        SlicingKind::AT => f * gq + q,
        SlicingKind::RDT => (f * gr + r) * gd + d,
        SlicingKind::RAT => (f * gr + r) * gq + q,
        SlicingKind::DAT => (f * gd + d) * gq + q,
        SlicingKind::RDAT => ((f * gr + r) * gd + d) * gq + q,
    };
    let mut emit = |i: usize, x: Complex<f64>| {
        if complex_sum {
            acc[i] += x;
        } else {
            out[i] += x.norm_sqr().sqrt();
        }
    };

    // columns are gathered into contiguous batches so each transform is one call
    let shift = |k: usize, n: usize| (k + n / 2) % n;
    let na_out = opts.angle_out;
    let mut batch = vec![Complex::new(0.0f64, 0.0); ns * nc.max(na_out)];
    for f in 0..nf {
        if kind.uses_doppler() {
            for a in 0..ka {
                let rows = &mut range_rows[(f * ka + a) * kc * ns..(f * ka + a + 1) * kc * ns];
                for c in 0..nc {
                    for r in 0..ns {
                        batch[r * nc + c] = rows[c * ns + r];
                    }
                }
                fft_d.process(&mut batch[..ns * nc]);
                for k in 0..nc {
                    let c = shift(k, nc);
                    for r in 0..ns {
                        rows[c * ns + r] = batch[r * nc + k];
                    }
                }
            }
        }
        for d in 0..kc {
            if kind.uses_angle() {
                let cols = &mut batch[..ns * na_out];
                cols.fill(Complex::new(0.0, 0.0));
                for a in 0..ka {
                    let src = ((f * ka + a) * kc + d) * ns;
                    for r in 0..ns {
                        cols[r * na_out + a] = range_rows[src + r];
                    }
                }
                fft_a.process(cols);
                // range is the outer loop so every output bin sums its range bins in order
                for r in 0..ns {
                    for k in 0..na_out {
                        emit(index(f, shift(k, na_out), d, r), cols[r * na_out + k]);
                    }
                }
            } else {
                for r in 0..ns {
                    emit(index(f, 0, d, r), range_rows[(f * kc + d) * ns + r]);
                }
            }
        }
    }
    if complex_sum {
        for (o, a) in out.iter_mut().zip(&acc) {
            *o = a.norm_sqr().sqrt();
        }
    }
    Tensor::from_vec(&out_shape, out.into_iter().map(lit).collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_dft() {
        let w = dft_matrix::<f64>(2, 2, false).unwrap();
        let expect = [1.0, 1.0, 1.0, -1.0];
        for (a, b) in w.re().iter().zip(expect) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(w.im().iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn quarter_turn_entry() {
        let w = dft_matrix::<f64>(4, 4, false).unwrap();
        let (r, i) = w.get(4 + 1);
        assert!(r.abs() < 1e-15 && (i + 1.0).abs() < 1e-15);
    }

    #[test]
    fn shifted_rows_are_rotated_by_half() {
        for n in [4usize, 7, 64] {
            let plain = dft_matrix::<f64>(n, n, false).unwrap();
            let shifted = dft_matrix::<f64>(n, n, true).unwrap();
            for row in 0..n {
                let src = (row + n - n / 2) % n;
                assert_eq!(&shifted.re()[row * n..(row + 1) * n], &plain.re()[src * n..(src + 1) * n]);
                assert_eq!(&shifted.im()[row * n..(row + 1) * n], &plain.im()[src * n..(src + 1) * n]);
            }
        }
    }

    #[test]
    fn rejects_output_smaller_than_input() {
        assert!(matches!(dft_matrix::<f64>(8, 4, false), Err(Error::Parameter(_))));
    }

    #[test]
    fn parses_kind_labels() {
        assert_eq!("R-D-T".parse::<SlicingKind>().unwrap(), SlicingKind::RDT);
        assert_eq!("dat".parse::<SlicingKind>().unwrap(), SlicingKind::DAT);
        assert!("XY".parse::<SlicingKind>().is_err());
    }

    #[test]
    fn reduce_input_checks_whole_counts() {
        let cube = RawDataCube::new(ComplexTensor::<f64>::zeros(&[1, 1, 8, 16]), 0).unwrap();
        assert_eq!(reduce_input(&cube, 0.5, 0.25).unwrap().shape(), [1, 1, 2, 8]);
        assert_eq!(reduce_input(&cube, 1.0, 1.0).unwrap(), cube);
        assert!(matches!(reduce_input(&cube, 0.3, 1.0), Err(Error::Parameter(_))));
    }
}
