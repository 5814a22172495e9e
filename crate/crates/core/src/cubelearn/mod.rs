//! Learnable pre-processing: stacked complex linear layers in place of the
//! range, Doppler and angle DFTs, followed by the modulus.
//!
//! The raw cube `[frames, antennas, chirps, samples]` is first sliced and
//! transposed to `[frames, samples, (chirps), (antennas)]`, dropping the axes
//! the slicing kind does not use. The range layer then runs on axis 1, the
//! Doppler layer on the chirp axis and the angle layer on the last axis, so
//! the heatmap axes come out in the same order as [`preprocess_dft`].
//!
//! [`preprocess_dft`]: crate::dft_oracle::preprocess_dft

mod activation;
mod init;

pub use activation::{apply_activation, c_relu, mod_relu, z_relu, Activation};
pub use init::{
    dft_frequencies, fourier_basis, init_weights, log_dft_frequencies, ComplexLinear, InitStrategy, LayerRole,
    TargetFocus,
};

use serde::{Deserialize, Serialize};

use crate::ctensor::{ComplexTensor, Tape, Tensor, Value, Var};
use crate::dft_oracle::{RangeAggregation, SlicingKind};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::radar_sim::RawDataCube;
use crate::rng;
use crate::scalar::{lit, Scalar};

/// Offset inside the log applied after the modulus.
pub const LOG_EPS: f64 = 1e-6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CubeLearnConfig {
    pub kind: SlicingKind,
    pub init: InitStrategy,
    pub activation_between: Activation,
    pub log_after_modulus: bool,
    pub angle_out: usize,
    pub module_lr: f64,
    pub aggregation: RangeAggregation,
    pub target_focus: TargetFocus,
}

impl Default for CubeLearnConfig {
    fn default() -> Self {
        Self {
            kind: SlicingKind::DT,
            init: InitStrategy::Dft,
            activation_between: Activation::None,
            log_after_modulus: false,
            angle_out: 64,
            module_lr: 1e-3,
            aggregation: RangeAggregation::Magnitude,
            target_focus: TargetFocus::default(),
        }
    }
}

impl CubeLearnConfig {
    pub fn for_kind(kind: SlicingKind) -> Self {
        Self { kind, ..Self::default() }
    }

    pub fn validate(&self, cube: [usize; 4]) -> Result<()> {
        if !(self.module_lr >= 0.0 && self.module_lr.is_finite()) {
            return Err(Error::Config(format!("module_lr must be finite and >= 0, got {}", self.module_lr)));
        }
        if cube.iter().any(|&d| d == 0) {
            return Err(Error::Config(format!("empty cube shape {cube:?}")));
        }
        if self.kind.uses_angle() && self.angle_out < cube[1] {
            return Err(Error::Config(format!(
                "angle_out {} is smaller than the {} antennas",
                self.angle_out, cube[1]
            )));
        }
        if !(self.target_focus.spread > 0.0 && self.target_focus.spread.is_finite()) {
            return Err(Error::Config(format!(
                "target-focus spread must be positive, got {}",
                self.target_focus.spread
            )));
        }
        Ok(())
    }
}

/// Per-sample input layout for `kind`: `[F, S]`, then `C` if Doppler is
/// used, then `A` if angle is used.
pub fn input_shape(kind: SlicingKind, cube: [usize; 4]) -> Vec<usize> {
    let [f, a, c, s] = cube;
    let mut shape = vec![f, s];
    if kind.uses_doppler() {
        shape.push(c);
    }
    if kind.uses_angle() {
        shape.push(a);
    }
    shape
}

/// Slices the cube for `kind` (antenna 0 without angle, chirp 0 without
/// Doppler) and transposes it to [`input_shape`] order.
pub fn prepare_input<T: Scalar>(cube: &RawDataCube<T>, kind: SlicingKind) -> Result<ComplexTensor<T>> {
    let dims = cube.shape();
    let [nf, na, nc, ns] = dims;
    let ka = if kind.keeps_all_antennas() { na } else { 1 };
    let kc = if kind.keeps_all_chirps() { nc } else { 1 };
    let total = nf * ka * kc * ns;
    let mut re = vec![T::zero(); total];
    let mut im = vec![T::zero(); total];
    let (src_re, src_im) = (cube.data.re(), cube.data.im());
    for f in 0..nf {
        for a in 0..ka {
            for c in 0..kc {
                let src = ((f * na + a) * nc + c) * ns;
                for s in 0..ns {
                    // destination [f, s, c, a]
                    let dst = ((f * ns + s) * kc + c) * ka + a;
                    re[dst] = src_re[src + s];
                    im[dst] = src_im[src + s];
                }
            }
        }
    }
    ComplexTensor::from_parts(&input_shape(kind, dims), re, im)
}

/// Parameter names used in checkpoints.
pub mod names {
    pub const RANGE: &str = "cubelearn.range.weight";
    pub const DOPPLER: &str = "cubelearn.doppler.weight";
    pub const ANGLE: &str = "cubelearn.angle.weight";
    pub const RANGE_BIAS: &str = "cubelearn.range.modrelu_bias";
    pub const DOPPLER_BIAS: &str = "cubelearn.doppler.modrelu_bias";
}

/// The learnable front-end: weights plus the configuration that places them.
#[derive(Clone, Debug, PartialEq)]
pub struct CubeLearn<T: Scalar> {
    config: CubeLearnConfig,
    cube: [usize; 4],
    params: ParamSet<T>,
}

impl<T: Scalar> CubeLearn<T> {
    /// Builds the layers for cubes of shape `cube` (after any input
    /// reduction). Each layer draws from its own seeded stream.
    pub fn new(config: CubeLearnConfig, cube: [usize; 4], seed: u64) -> Result<Self> {
        config.validate(cube)?;
        let [_, na, nc, ns] = cube;
        let kind = config.kind;
        let focus = Some(&config.target_focus);
        let layer = |role: LayerRole, m: usize, n: usize| -> Result<ComplexLinear<T>> {
            let mut r = rng::stream(seed, &format!("cubelearn/{}", role.name()), 0);
            init_weights(role, m, n, config.init, focus, &mut r)
        };
        let mut params = ParamSet::new();
        params.push(names::RANGE, layer(LayerRole::Range, ns, ns)?.weight);
        if kind.uses_doppler() {
            params.push(names::DOPPLER, layer(LayerRole::Doppler, nc, nc)?.weight);
        }
        if kind.uses_angle() {
            params.push(names::ANGLE, layer(LayerRole::Angle, na, config.angle_out)?.weight);
        }
        if config.activation_between == Activation::ModRelu {
            if kind.uses_doppler() || kind.uses_angle() {
                params.push(names::RANGE_BIAS, Tensor::<T>::zeros(&[ns]));
            }
            if kind.uses_doppler() && kind.uses_angle() {
                params.push(names::DOPPLER_BIAS, Tensor::<T>::zeros(&[nc]));
            }
        }
        Ok(Self { config, cube, params })
    }

    pub fn config(&self) -> &CubeLearnConfig {
        &self.config
    }

    pub fn cube_shape(&self) -> [usize; 4] {
        self.cube
    }

    pub fn params(&self) -> &ParamSet<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamSet<T> {
        &mut self.params
    }

    pub fn input_shape(&self) -> Vec<usize> {
        input_shape(self.config.kind, self.cube)
    }

    pub fn output_shape(&self) -> Vec<usize> {
        self.config.kind.output_shape(self.cube, self.config.angle_out)
    }

    /// Complex weights in the layer stack (biases excluded).
    pub fn complex_weight_count(&self) -> usize {
        self.params
            .iter()
            .filter(|p| p.value.is_complex())
            .map(|p| p.value.shape().iter().product::<usize>())
            .sum()
    }

    pub fn layer(&self, role: LayerRole) -> Option<ComplexLinear<T>> {
        let name = match role {
            LayerRole::Range => names::RANGE,
            LayerRole::Doppler => names::DOPPLER,
            LayerRole::Angle => names::ANGLE,
        };
        let weight = self.params.get(name)?.as_complex().ok()?.clone();
        Some(ComplexLinear { role, weight })
    }

    fn activate(&self, tape: &mut Tape<T>, x: Var, axis: usize, bias: Option<Var>) -> Result<Var> {
        match self.config.activation_between {
            Activation::None => Ok(x),
            Activation::ModRelu => {
                let b = bias.ok_or_else(|| Error::Parameter("ModReLU bias missing".into()))?;
                mod_relu(tape, x, b, axis)
            }
            Activation::CRelu => c_relu(tape, x),
            Activation::ZRelu => z_relu(tape, x),
        }
    }

    /// Records the heatmap computation for a prepared input `x` (see
    /// [`prepare_input`]). `vars` are this module's parameters on `tape`, in
    /// [`CubeLearn::params`] order.
    pub fn forward(&self, tape: &mut Tape<T>, x: Var, vars: &[Var]) -> Result<Var> {
        if vars.len() != self.params.len() {
            return Err(Error::Parameter(format!(
                "{} parameter handles for {} parameters",
                vars.len(),
                self.params.len()
            )));
        }
        let expected = self.input_shape();
        if tape.value(x).shape() != expected.as_slice() {
            return Err(Error::Dimension {
                op: "cubelearn input",
                left: tape.value(x).shape().to_vec(),
                right: expected,
            });
        }
        let var = |name: &str| self.params.position(name).map(|i| vars[i]);
        let kind = self.config.kind;
        let last = expected.len() - 1;

        let mut h = tape.apply_along_axis(x, var(names::RANGE).expect("range layer"), 1)?;
        if kind.uses_doppler() || kind.uses_angle() {
            h = self.activate(tape, h, 1, var(names::RANGE_BIAS))?;
        }
        if kind.uses_doppler() {
            h = tape.apply_along_axis(h, var(names::DOPPLER).expect("doppler layer"), 2)?;
            if kind.uses_angle() {
                h = self.activate(tape, h, 2, var(names::DOPPLER_BIAS))?;
            }
        }
        if kind.uses_angle() {
            h = tape.apply_along_axis(h, var(names::ANGLE).expect("angle layer"), last)?;
        }

        let mut out = if kind.aggregates_range() {
            match self.config.aggregation {
                RangeAggregation::Magnitude => {
                    let m = tape.modulus(h)?;
                    tape.sum_axis(m, 1)?
                }
                RangeAggregation::Complex => {
                    let s = tape.sum_axis(h, 1)?;
                    tape.modulus(s)?
                }
            }
        } else {
            tape.modulus(h)?
        };
        if self.config.log_after_modulus {
            out = tape.log_eps(out, lit(LOG_EPS))?;
        }
        Ok(out)
    }

    /// Heatmap of one prepared input without recording gradients.
    pub fn heatmap_prepared(&self, input: &ComplexTensor<T>) -> Result<Tensor<T>> {
        let mut tape = Tape::new();
        let vars = self.params.register_frozen(&mut tape);
        let x = tape.constant(input.clone());
        let y = self.forward(&mut tape, x, &vars)?;
        Ok(tape.real(y)?.clone())
    }

    /// Heatmap of one raw cube without recording gradients.
    pub fn heatmap(&self, cube: &RawDataCube<T>) -> Result<Tensor<T>> {
        if cube.shape() != self.cube {
            return Err(Error::Dimension {
                op: "cubelearn cube",
                left: cube.shape().to_vec(),
                right: self.cube.to_vec(),
            });
        }
        self.heatmap_prepared(&prepare_input(cube, self.config.kind)?)
    }

    /// Replaces the parameters, checking names and shapes.
    pub fn set_params(&mut self, params: &ParamSet<T>) -> Result<()> {
        self.params.assign(params)
    }

    pub fn param_value(&self, name: &str) -> Option<&Value<T>> {
        self.params.get(name)
    }
}
