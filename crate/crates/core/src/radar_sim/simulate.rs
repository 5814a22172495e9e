use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

use super::config::RadarConfig;
use super::trajectory::TargetTrajectory;
use crate::ctensor::ComplexTensor;
use crate::error::{Error, Result};
use crate::rng;
use crate::scalar::{lit, Scalar};

/// One labelled raw cube `[frames, antennas, chirps, samples]`.
#[derive(Clone, Debug, PartialEq)]
pub struct RawDataCube<T> {
    pub data: ComplexTensor<T>,
    pub label: i32,
}

impl<T: Scalar> RawDataCube<T> {
    pub fn new(data: ComplexTensor<T>, label: i32) -> Result<Self> {
        if data.rank() != 4 {
            return Err(Error::Shape(format!(
                "raw cube must be [frames, antennas, chirps, samples], got {:?}",
                data.shape()
            )));
        }
        Ok(Self { data, label })
    }

    pub fn shape(&self) -> [usize; 4] {
        let s = self.data.shape();
        [s[0], s[1], s[2], s[3]]
    }

    /// Whether the cube dimensions agree with `config`.
    pub fn matches(&self, config: &RadarConfig) -> bool {
        self.shape() == config.cube_shape()
    }

    pub fn cast<U: Scalar>(&self) -> RawDataCube<U> {
        RawDataCube {
            data: self.data.cast(),
            label: self.label,
        }
    }
}

fn validate_target(config: &RadarConfig, target: &TargetTrajectory) -> Result<()> {
    for f in 0..config.n_frames {
        for c in 0..config.n_chirps {
            let t = config.chirp_time(f, c);
            let r = target.range_at(t);
            if !(r > 0.0 && r.is_finite()) {
                return Err(Error::Domain(format!("target range {r} m at t = {t:.6} s is not positive")));
            }
            let a = target.angle_at(t);
            if !(a.abs() < PI / 2.0) {
                return Err(Error::Domain(format!("target azimuth {a} rad at t = {t:.6} s is outside (-pi/2, pi/2)")));
            }
        }
    }
    Ok(())
}

/// Synthesizes the IF signal of point reflectors plus complex Gaussian noise.
///
/// Sample `(f, p, c, n)` of a target contributes `a * exp(j psi)` with
/// `psi = 2 pi f_b n / fs + 4 pi R / lambda + pi p sin(theta)`, where `R` and
/// `theta` are taken at the chirp start time (stop-and-hop).
pub fn simulate_cube<T: Scalar>(
    config: &RadarConfig,
    targets: &[TargetTrajectory],
    label: i32,
    seed: u64,
) -> Result<RawDataCube<T>> {
    config.validate()?;
    for t in targets {
        validate_target(config, t)?;
    }
    let [nf, na, nc, ns] = config.cube_shape();
    let total = nf * na * nc * ns;
    let mut re = vec![0.0f64; total];
    let mut im = vec![0.0f64; total];
    let lambda = config.wavelength();
    let mut row_re = vec![0.0f64; ns];
    let mut row_im = vec![0.0f64; ns];
    for target in targets {
        for f in 0..nf {
            for c in 0..nc {
                let t = config.chirp_time(f, c);
                let range = target.range_at(t);
                let theta = target.angle_at(t);
                let fb = config.beat_frequency(range);
                for n in 0..ns {
                    let (s, co) = (2.0 * PI * fb * n as f64 / config.sample_rate).sin_cos();
                    row_re[n] = co;
                    row_im[n] = s;
                }
                let base_phase = 4.0 * PI * range / lambda;
                for p in 0..na {
                    let phase = base_phase + PI * p as f64 * theta.sin();
                    let (s, co) = phase.sin_cos();
                    let (pr, pi_) = (target.amplitude * co, target.amplitude * s);
                    let off = ((f * na + p) * nc + c) * ns;
                    let dst_re = &mut re[off..off + ns];
                    let dst_im = &mut im[off..off + ns];
                    for n in 0..ns {
                        dst_re[n] += pr * row_re[n] - pi_ * row_im[n];
                        dst_im[n] += pr * row_im[n] + pi_ * row_re[n];
                    }
                }
            }
        }
    }
    if config.noise_std > 0.0 {
        let mut noise = rng::stream(seed, "noise", 0);
        for (r, i) in re.iter_mut().zip(im.iter_mut()) {
            let a: f64 = StandardNormal.sample(&mut noise);
            let b: f64 = StandardNormal.sample(&mut noise);
            *r += config.noise_std * a;
            *i += config.noise_std * b;
        }
    }
    let data = ComplexTensor::from_parts(
        &config.cube_shape(),
        re.into_iter().map(lit).collect(),
        im.into_iter().map(lit).collect(),
    )?;
    RawDataCube::new(data, label)
}

/// Subtracts the chirp-axis mean from every (frame, antenna, sample) series.
pub fn clutter_removal<T: Scalar>(cube: &RawDataCube<T>) -> Result<RawDataCube<T>> {
    let [nf, na, nc, ns] = cube.shape();
    if nc < 2 {
        return Err(Error::Parameter(format!("clutter removal needs at least 2 chirps, got {nc}")));
    }
    let mut data = cube.data.clone();
    let inv = T::one() / lit::<T>(nc as f64);
    let (re, im) = data.parts_mut();
    for plane in [re, im] {
        for fa in 0..nf * na {
            let block = &mut plane[fa * nc * ns..(fa + 1) * nc * ns];
            for n in 0..ns {
                let mut mean = T::zero();
                for c in 0..nc {
                    mean += block[c * ns + n];
                }
                mean *= inv;
                for c in 0..nc {
                    block[c * ns + n] -= mean;
                }
            }
        }
    }
    RawDataCube::new(data, cube.label)
}
