use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

/// Radial distance as a function of time.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RangeMotion {
    Static { range: f64 },
    /// `range + velocity * (t - t_ref)`; positive velocity recedes.
    Linear { range: f64, velocity: f64, t_ref: f64 },
    /// `center + amplitude * sin(2 pi freq t + phase)`.
    Oscillation { center: f64, amplitude: f64, freq_hz: f64, phase: f64 },
    /// `offset + slope * |t - t_turn|`, a V (or inverted V for negative slope).
    Vee { offset: f64, slope: f64, t_turn: f64 },
}

impl RangeMotion {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            RangeMotion::Static { range } => range,
            RangeMotion::Linear { range, velocity, t_ref } => range + velocity * (t - t_ref),
            RangeMotion::Oscillation { center, amplitude, freq_hz, phase } => {
                center + amplitude * (2.0 * PI * freq_hz * t + phase).sin()
            }
            RangeMotion::Vee { offset, slope, t_turn } => offset + slope * (t - t_turn).abs(),
        }
    }
}

/// Azimuth in radians as a function of time (0 is boresight).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum AngleMotion {
    Fixed { angle: f64 },
    /// Linear sweep from `from` at t = 0 to `to` at t = `duration`.
    Sweep { from: f64, to: f64, duration: f64 },
}

impl AngleMotion {
    pub fn at(&self, t: f64) -> f64 {
        match *self {
            AngleMotion::Fixed { angle } => angle,
            AngleMotion::Sweep { from, to, duration } => from + (to - from) * (t / duration),
        }
    }
}

/// A point reflector with scripted motion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTrajectory {
    pub amplitude: f64,
    pub range: RangeMotion,
    pub angle: AngleMotion,
}

impl TargetTrajectory {
    pub fn fixed(amplitude: f64, range: f64, angle: f64) -> Self {
        Self {
            amplitude,
            range: RangeMotion::Static { range },
            angle: AngleMotion::Fixed { angle },
        }
    }

    pub fn moving(amplitude: f64, range: f64, velocity: f64, angle: f64) -> Self {
        Self {
            amplitude,
            range: RangeMotion::Linear { range, velocity, t_ref: 0.0 },
            angle: AngleMotion::Fixed { angle },
        }
    }

    pub fn range_at(&self, t: f64) -> f64 {
        self.range.at(t)
    }

    pub fn angle_at(&self, t: f64) -> f64 {
        self.angle.at(t)
    }
}
