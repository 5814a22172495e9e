use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Physical parameters of a single-transmitter FMCW radar with a uniform
/// half-wavelength virtual array in azimuth.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RadarConfig {
    /// Chirp start frequency, Hz.
    pub start_freq: f64,
    /// Frequency slope, Hz/s.
    pub slope: f64,
    /// ADC sampling rate, samples/s.
    pub sample_rate: f64,
    pub n_samples: usize,
    /// Chirp loops per frame.
    pub n_chirps: usize,
    pub n_virtual_antennas: usize,
    /// Seconds.
    pub frame_period: f64,
    pub n_frames: usize,
    /// Standard deviation of the additive noise, per real/imag component.
    pub noise_std: f64,
}

impl Default for RadarConfig {
    fn default() -> Self {
        Self {
            start_freq: 60.25e9,
            slope: 60e9 / 1e-3,
            sample_rate: 1e7,
            n_samples: 256,
            n_chirps: 128,
            n_virtual_antennas: 8,
            frame_period: 0.1,
            n_frames: 10,
            // A unit-amplitude target peaks at 256 after the range DFT while
            // the noise floor has power 2*256*sigma^2: sigma^2 = 256/200 puts
            // the per-bin SNR at 20 dB.
            noise_std: (256.0f64 / 200.0).sqrt(),
        }
    }
}

impl RadarConfig {
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / self.start_freq
    }

    /// Spacing between chirp start times within a frame.
    pub fn chirp_interval(&self) -> f64 {
        self.frame_period / self.n_chirps as f64
    }

    /// Total observation time of one cube.
    pub fn duration(&self) -> f64 {
        self.frame_period * self.n_frames as f64
    }

    /// Chirp start time of (frame, chirp).
    pub fn chirp_time(&self, frame: usize, chirp: usize) -> f64 {
        frame as f64 * self.frame_period + chirp as f64 * self.chirp_interval()
    }

    /// IF beat frequency produced by a reflector at `range` meters.
    pub fn beat_frequency(&self, range: f64) -> f64 {
        2.0 * self.slope * range / SPEED_OF_LIGHT
    }

    /// Cube shape `[frames, antennas, chirps, samples]`.
    pub fn cube_shape(&self) -> [usize; 4] {
        [self.n_frames, self.n_virtual_antennas, self.n_chirps, self.n_samples]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("start_freq", self.start_freq),
            ("slope", self.slope),
            ("sample_rate", self.sample_rate),
            ("frame_period", self.frame_period),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive and finite, got {v}")));
            }
        }
        let counts = [
            ("n_samples", self.n_samples),
            ("n_chirps", self.n_chirps),
            ("n_virtual_antennas", self.n_virtual_antennas),
            ("n_frames", self.n_frames),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        if !(self.noise_std >= 0.0 && self.noise_std.is_finite()) {
            return Err(Error::Config(format!("noise_std must be >= 0, got {}", self.noise_std)));
        }
        let active = self.n_samples as f64 / self.sample_rate;
        if active > self.chirp_interval() {
            return Err(Error::Config(format!(
                "{} samples at {} S/s take {active:.3e} s, longer than the chirp interval {:.3e} s",
                self.n_samples,
                self.sample_rate,
                self.chirp_interval()
            )));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_are_valid_and_consistent() {
        let c = RadarConfig::default();
        c.validate().unwrap();
        assert_eq!(c.cube_shape(), [10, 8, 128, 256]);
        assert!((c.slope - 6e13).abs() < 1.0);
        assert!((c.chirp_interval() - 0.1 / 128.0).abs() < 1e-15);
    }

    #[test]
    fn rejects_overlong_chirp() {
        let c = RadarConfig {
            n_samples: 10_000,
            ..RadarConfig::default()
        };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }
}
