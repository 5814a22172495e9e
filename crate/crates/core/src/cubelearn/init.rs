//! Weight initialization for the complex linear layers.
//!
//! Every Fourier-style strategy reduces to a list of basis frequencies `k_a`
//! (in bins) and fills row `a` with `exp(-j 2 pi k_a b / N)`. Roles whose
//! output should be centered (Doppler, angle) list their frequencies in
//! ascending order over `[-N/2, N/2)`, so zero frequency lands on row `N/2`;
//! the range role lists them over `[0, N)`.

use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use crate::ctensor::ComplexTensor;
use crate::error::{Error, Result};
use crate::scalar::{lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LayerRole {
    Range,
    Doppler,
    Angle,
}

impl LayerRole {
    pub fn centered(self) -> bool {
        !matches!(self, LayerRole::Range)
    }

    pub fn name(self) -> &'static str {
        match self {
            LayerRole::Range => "range",
            LayerRole::Doppler => "doppler",
            LayerRole::Angle => "angle",
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitStrategy {
    #[default]
    Dft,
    LogDft,
    Random,
    RandomNudft,
    TargetFocus,
}

impl InitStrategy {
    pub const ALL: [InitStrategy; 5] = [
        InitStrategy::Dft,
        InitStrategy::LogDft,
        InitStrategy::Random,
        InitStrategy::RandomNudft,
        InitStrategy::TargetFocus,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitStrategy::Dft => "dft",
            InitStrategy::LogDft => "log_dft",
            InitStrategy::Random => "random",
            InitStrategy::RandomNudft => "random_nudft",
            InitStrategy::TargetFocus => "target_focus",
        }
    }
}

impl fmt::Display for InitStrategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitStrategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm = s.to_ascii_lowercase().replace('-', "_");
        InitStrategy::ALL
            .into_iter()
            .find(|i| i.name() == norm || i.name().replace('_', "") == norm)
            .ok_or_else(|| Error::Config(format!("unknown initialization strategy '{s}'")))
    }
}

/// Prior target location per role, in bins of that role's output
/// (centered coordinates for Doppler and angle).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetFocus {
    pub range_bin: Option<f64>,
    pub doppler_bin: Option<f64>,
    pub angle_bin: Option<f64>,
    /// Standard deviation of the basis frequencies around the target, in bins.
    pub spread: f64,
}

impl Default for TargetFocus {
    fn default() -> Self {
        Self { range_bin: None, doppler_bin: None, angle_bin: None, spread: 4.0 }
    }
}

impl TargetFocus {
    fn bin(&self, role: LayerRole) -> Option<f64> {
        match role {
            LayerRole::Range => self.range_bin,
            LayerRole::Doppler => self.doppler_bin,
            LayerRole::Angle => self.angle_bin,
        }
    }
}

/// A bias-free complex linear map `y = W x` with `W: [N_out x M_in]`.
#[derive(Clone, Debug, PartialEq)]
pub struct ComplexLinear<T> {
    pub role: LayerRole,
    pub weight: ComplexTensor<T>,
}

impl<T: Scalar> ComplexLinear<T> {
    pub fn in_features(&self) -> usize {
        self.weight.shape()[1]
    }

    pub fn out_features(&self) -> usize {
        self.weight.shape()[0]
    }
}

/// Uniform-grid frequencies of the plain DFT.
pub fn dft_frequencies(role: LayerRole, n: usize) -> Vec<f64> {
    let offset = if role.centered() { (n / 2) as f64 } else { 0.0 };
    (0..n).map(|a| a as f64 - offset).collect()
}

/// Geometric spacing between 0.5 and N/2 bins, mirrored for the negative
/// frequencies, so low frequencies are sampled densely. As with the DFT grid,
/// -N/2 is included and +N/2 (its alias) is not.
pub fn log_dft_frequencies(role: LayerRole, n: usize) -> Vec<f64> {
    let n_neg = n / 2;
    let n_pos = n - n_neg;
    // `count` points of the geometric ladder 0.5 .. N/2 split into `steps` intervals.
    let ladder = |count: usize, steps: usize| -> Vec<f64> {
        let (lo, hi) = (0.5f64, n as f64 / 2.0);
        (0..count)
            .map(|i| if steps == 0 { lo } else { lo * (hi / lo).powf(i as f64 / steps as f64) })
            .collect()
    };
    let pos = ladder(n_pos, n_pos);
    let neg: Vec<f64> = ladder(n_neg, n_neg.saturating_sub(1)).into_iter().rev().map(|k| -k).collect();
    if role.centered() {
        neg.into_iter().chain(pos).collect()
    } else {
        // Negative frequencies alias to the top of [0, N).
        pos.into_iter().chain(neg.into_iter().map(|k| k + n as f64)).collect()
    }
}

fn sorted(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).expect("finite frequencies"));
    v
}

/// Row `a` = `exp(-j 2 pi k_a b / N)` for `b < M`.
pub fn fourier_basis<T: Scalar>(freqs: &[f64], m: usize, n: usize) -> Result<ComplexTensor<T>> {
    if freqs.len() != n {
        return Err(Error::Parameter(format!("{} frequencies for {n} outputs", freqs.len())));
    }
    let mut re = Vec::with_capacity(n * m);
    let mut im = Vec::with_capacity(n * m);
    for &k in freqs {
        for b in 0..m {
            let turns = (k * b as f64).rem_euclid(n as f64);
            let theta = -2.0 * PI * turns / n as f64;
            re.push(lit(theta.cos()));
            im.push(lit(theta.sin()));
        }
    }
    ComplexTensor::from_parts(&[n, m], re, im)
}

/// Builds the `[N x M]` layer of `role` with `strategy`.
pub fn init_weights<T: Scalar>(
    role: LayerRole,
    m: usize,
    n: usize,
    strategy: InitStrategy,
    focus: Option<&TargetFocus>,
    rng: &mut impl Rng,
) -> Result<ComplexLinear<T>> {
    if m == 0 || n < m {
        return Err(Error::Parameter(format!(
            "{} layer needs output size {n} >= input size {m} >= 1",
            role.name()
        )));
    }
    let weight = match strategy {
        InitStrategy::Dft => fourier_basis(&dft_frequencies(role, n), m, n)?,
        InitStrategy::LogDft => fourier_basis(&log_dft_frequencies(role, n), m, n)?,
        InitStrategy::RandomNudft => {
            let (lo, hi) = if role.centered() {
                (-((n / 2) as f64), (n - n / 2) as f64)
            } else {
                (0.0, n as f64)
            };
            let freqs = sorted((0..n).map(|_| rng.gen_range(lo..hi)).collect());
            fourier_basis(&freqs, m, n)?
        }
        InitStrategy::TargetFocus => {
            let focus = focus.ok_or_else(|| Error::Config("target-focus initialization needs target bins".into()))?;
            let center = focus.bin(role).ok_or_else(|| {
                Error::Config(format!("target-focus initialization has no {} target bin", role.name()))
            })?;
            let normal = Normal::new(center, focus.spread)
                .map_err(|e| Error::Config(format!("target-focus spread {}: {e}", focus.spread)))?;
            let freqs = sorted((0..n).map(|_| normal.sample(rng)).collect());
            fourier_basis(&freqs, m, n)?
        }
        InitStrategy::Random => {
            // He scaling on the fan-in, applied to both parts.
            let std = (2.0 / m as f64).sqrt();
            let mut draw = || -> T {
                let z: f64 = StandardNormal.sample(rng);
                lit(std * z)
            };
            let re = (0..n * m).map(|_| draw()).collect();
            let im = (0..n * m).map(|_| draw()).collect();
            ComplexTensor::from_parts(&[n, m], re, im)?
        }
    };
    Ok(ComplexLinear { role, weight })
}
