//! Synthetic gesture datasets: class templates, per-sample perturbations,
//! split bookkeeping and on-disk generation.

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use super::config::RadarConfig;
use super::simulate::{simulate_cube, RawDataCube};
use super::trajectory::{AngleMotion, RangeMotion, TargetTrajectory};
use crate::error::{Error, Result};
use crate::io::cube_file;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Split {
    Train,
    Val,
    Test,
    OutOfSet,
}

impl Split {
    pub const ALL: [Split; 4] = [Split::Train, Split::Val, Split::Test, Split::OutOfSet];

    pub fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::OutOfSet => "out_of_set",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        Split::ALL
            .into_iter()
            .find(|sp| sp.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown split '{s}' (train, val, test, out_of_set)")))
    }

    pub fn in_set(self) -> bool {
        self != Split::OutOfSet
    }
}

/// Perturbation regime of one group of splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Perturbation {
    /// Multiplicative factors are drawn uniformly from `[1 - relative, 1 + relative]`.
    pub relative: f64,
    /// Reference range drawn uniformly from `[range_min, range_max]` meters.
    pub range_min: f64,
    pub range_max: f64,
}

/// Samples per class in each split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitCounts {
    pub train: usize,
    pub val: usize,
    pub test: usize,
    pub out_of_set: usize,
}

impl SplitCounts {
    pub fn get(&self, split: Split) -> usize {
        match split {
            Split::Train => self.train,
            Split::Val => self.val,
            Split::Test => self.test,
            Split::OutOfSet => self.out_of_set,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum MotionTemplate {
    /// Constant radial velocity through the reference range at mid-sample.
    Radial { velocity: f64 },
    /// Sinusoidal radial displacement around the reference range, random phase.
    Oscillation { freq_hz: f64, amplitude_m: f64 },
    /// Fixed range, azimuth swept linearly over the sample.
    LateralSweep { from_deg: f64, to_deg: f64 },
    /// `R0 + offset + speed * |t - T/2|` at a fixed azimuth.
    Vee { offset_m: f64, speed: f64, angle_deg: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetTemplate {
    pub amplitude: f64,
    pub motion: MotionTemplate,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClassTemplate {
    pub name: String,
    pub targets: Vec<TargetTemplate>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSpec {
    pub classes: Vec<ClassTemplate>,
    pub counts: SplitCounts,
    pub in_set: Perturbation,
    pub out_of_set: Perturbation,
    pub seed: u64,
}

impl Default for DatasetSpec {
    fn default() -> Self {
        Self::gestures(0)
    }
}

fn single(motion: MotionTemplate) -> Vec<TargetTemplate> {
    vec![TargetTemplate { amplitude: 1.0, motion }]
}

impl DatasetSpec {
    /// The six built-in synthetic gesture classes with the 15/5/10/30 split.
    pub fn gestures(seed: u64) -> Self {
        let classes = vec![
            ClassTemplate {
                name: "approach".into(),
                targets: single(MotionTemplate::Radial { velocity: -0.4 }),
            },
            ClassTemplate {
                name: "recede".into(),
                targets: single(MotionTemplate::Radial { velocity: 0.4 }),
            },
            ClassTemplate {
                name: "oscillate_fast".into(),
                targets: single(MotionTemplate::Oscillation { freq_hz: 1.5, amplitude_m: 0.04 }),
            },
            ClassTemplate {
                name: "oscillate_slow".into(),
                targets: single(MotionTemplate::Oscillation { freq_hz: 0.7, amplitude_m: 0.04 }),
            },
            ClassTemplate {
                name: "lateral_sweep".into(),
                targets: single(MotionTemplate::LateralSweep { from_deg: -30.0, to_deg: 30.0 }),
            },
            ClassTemplate {
                name: "pinch".into(),
                targets: vec![
                    TargetTemplate {
                        amplitude: 1.0,
                        motion: MotionTemplate::Vee { offset_m: 0.02, speed: 0.2, angle_deg: 15.0 },
                    },
                    TargetTemplate {
                        amplitude: 1.0,
                        motion: MotionTemplate::Vee { offset_m: -0.02, speed: -0.2, angle_deg: -15.0 },
                    },
                ],
            },
        ];
        Self {
            classes,
            counts: SplitCounts { train: 15, val: 5, test: 10, out_of_set: 30 },
            in_set: Perturbation { relative: 0.15, range_min: 0.3, range_max: 0.5 },
            out_of_set: Perturbation { relative: 0.25, range_min: 0.5, range_max: 0.7 },
            seed,
        }
    }

    pub fn n_classes(&self) -> usize {
        self.classes.len()
    }

    pub fn perturbation(&self, split: Split) -> &Perturbation {
        if split.in_set() {
            &self.in_set
        } else {
            &self.out_of_set
        }
    }

    pub fn validate(&self) -> Result<()> {
        for p in [&self.in_set, &self.out_of_set] {
            if !(0.0..1.0).contains(&p.relative) || !(p.range_min > 0.0 && p.range_max >= p.range_min) {
                return Err(Error::Config(format!("invalid perturbation {p:?}")));
            }
        }
        for c in &self.classes {
            if c.targets.is_empty() {
                return Err(Error::Config(format!("class '{}' has no targets", c.name)));
            }
        }
        Ok(())
    }

    /// `(class, index)` pairs of a split, class-major.
    pub fn split_members(&self, split: Split) -> Vec<(usize, usize)> {
        let n = self.counts.get(split);
        (0..self.classes.len())
            .flat_map(|c| (0..n).map(move |i| (c, i)))
            .collect()
    }
}

/// Everything needed to regenerate one sample.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub split: Split,
    pub class: usize,
    pub index: usize,
    pub label: i32,
    pub seed: u64,
    pub file: String,
    pub reference_range: f64,
    pub amplitude_factor: f64,
    pub rate_factor: f64,
    pub displacement_factor: f64,
}

fn instantiate(
    template: &TargetTemplate,
    r0: f64,
    record: &SampleRecord,
    duration: f64,
    rng: &mut impl Rng,
) -> TargetTrajectory {
    let amplitude = template.amplitude * record.amplitude_factor;
    let rate = record.rate_factor;
    let mid = duration / 2.0;
    let (range, angle) = match template.motion {
        MotionTemplate::Radial { velocity } => (
            RangeMotion::Linear { range: r0, velocity: velocity * rate, t_ref: mid },
            AngleMotion::Fixed { angle: 0.0 },
        ),
        MotionTemplate::Oscillation { freq_hz, amplitude_m } => (
            RangeMotion::Oscillation {
                center: r0,
                amplitude: amplitude_m * record.displacement_factor,
                freq_hz: freq_hz * rate,
                phase: rng.gen_range(0.0..2.0 * PI),
            },
            AngleMotion::Fixed { angle: 0.0 },
        ),
        MotionTemplate::LateralSweep { from_deg, to_deg } => (
            RangeMotion::Static { range: r0 },
            AngleMotion::Sweep {
                from: (from_deg * rate).to_radians(),
                to: (to_deg * rate).to_radians(),
                duration,
            },
        ),
        MotionTemplate::Vee { offset_m, speed, angle_deg } => (
            RangeMotion::Vee {
                offset: r0 + offset_m * record.displacement_factor,
                slope: speed * rate,
                t_turn: mid,
            },
            AngleMotion::Fixed { angle: angle_deg.to_radians() },
        ),
    };
    TargetTrajectory { amplitude, range, angle }
}

/// Draws the perturbation of sample `(split, class, index)` and simulates it.
pub fn sample_cube<T: Scalar>(
    spec: &DatasetSpec,
    config: &RadarConfig,
    split: Split,
    class: usize,
    index: usize,
) -> Result<(SampleRecord, RawDataCube<T>)> {
    let template = spec
        .classes
        .get(class)
        .ok_or_else(|| Error::Config(format!("class {class} not defined")))?;
    let label = format!("sample/{}/{}", split.name(), class);
    let seed = rng::derive_seed(spec.seed, &label, index as u64);
    let mut draws = rng::stream(seed, "perturbation", 0);
    let p = spec.perturbation(split);
    let mut factor = || draws.gen_range(1.0 - p.relative..=1.0 + p.relative);
    let (amplitude_factor, rate_factor, displacement_factor) = (factor(), factor(), factor());
    let reference_range = draws.gen_range(p.range_min..=p.range_max);
    let record = SampleRecord {
        split,
        class,
        index,
        label: class as i32,
        seed,
        file: format!("{}/c{:02}_{:04}.rdc", split.name(), class, index),
        reference_range,
        amplitude_factor,
        rate_factor,
        displacement_factor,
    };
    let mut phases = rng::stream(seed, "phase", 0);
    let targets: Vec<TargetTrajectory> = template
        .targets
        .iter()
        .map(|t| instantiate(t, reference_range, &record, config.duration(), &mut phases))
        .collect();
    let cube = simulate_cube(config, &targets, record.label, seed)?;
    Ok((record, cube))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSummary {
    pub total: usize,
    pub per_class: Vec<usize>,
    pub perturbation: Perturbation,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub format_version: u32,
    pub seed: u64,
    pub n_classes: usize,
    pub class_names: Vec<String>,
    pub config: RadarConfig,
    pub spec: DatasetSpec,
    pub splits: BTreeMap<String, SplitSummary>,
    pub samples: Vec<SampleRecord>,
}

pub const MANIFEST_FILE: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

impl Manifest {
    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
        let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
        if m.format_version != MANIFEST_VERSION {
            return Err(Error::Format {
                path,
                reason: format!("manifest version {} unsupported", m.format_version),
            });
        }
        Ok(m)
    }

    pub fn records(&self, split: Split) -> impl Iterator<Item = &SampleRecord> {
        self.samples.iter().filter(move |s| s.split == split)
    }
}

/// Writes one cube file per sample plus `manifest.json` into `out_dir`.
/// Output is a pure function of `(spec, config)`.
pub fn generate_dataset(spec: &DatasetSpec, config: &RadarConfig, out_dir: &Path) -> Result<Manifest> {
    spec.validate()?;
    config.validate()?;
    for split in Split::ALL {
        let dir = out_dir.join(split.name());
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let jobs: Vec<(Split, usize, usize)> = Split::ALL
        .into_iter()
        .flat_map(|s| spec.split_members(s).into_iter().map(move |(c, i)| (s, c, i)))
        .collect();
    let samples = jobs
        .par_iter()
        .map(|&(split, class, index)| {
            let (record, cube) = sample_cube::<f64>(spec, config, split, class, index)?;
            cube_file::write_cube(&out_dir.join(&record.file), &cube)?;
            Ok(record)
        })
        .collect::<Result<Vec<_>>>()?;
    let splits = Split::ALL
        .into_iter()
        .map(|s| {
            let n = spec.counts.get(s);
            (
                s.name().to_string(),
                SplitSummary {
                    total: n * spec.n_classes(),
                    per_class: vec![n; spec.n_classes()],
                    perturbation: spec.perturbation(s).clone(),
                },
            )
        })
        .collect();
    let manifest = Manifest {
        format_version: MANIFEST_VERSION,
        seed: spec.seed,
        n_classes: spec.n_classes(),
        class_names: spec.classes.iter().map(|c| c.name.clone()).collect(),
        config: config.clone(),
        spec: spec.clone(),
        splits,
        samples,
    };
    let path: PathBuf = out_dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&path, e))?;
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn split_streams_are_disjoint() {
        let spec = DatasetSpec::gestures(3);
        let cfg = RadarConfig { n_frames: 1, n_chirps: 4, n_samples: 8, ..RadarConfig::default() };
        let (a, _) = sample_cube::<f64>(&spec, &cfg, Split::Train, 0, 0).unwrap();
        let (b, _) = sample_cube::<f64>(&spec, &cfg, Split::Test, 0, 0).unwrap();
        let (c, _) = sample_cube::<f64>(&spec, &cfg, Split::OutOfSet, 0, 0).unwrap();
        assert_ne!(a.seed, b.seed);
        assert_ne!(a.seed, c.seed);
        assert!((0.5..=0.7).contains(&c.reference_range));
        assert!((0.3..=0.5).contains(&a.reference_range));
    }

    #[test]
    fn all_builtin_classes_stay_in_range_under_both_regimes() {
        let spec = DatasetSpec::gestures(11);
        let cfg = RadarConfig { n_chirps: 8, n_samples: 8, n_virtual_antennas: 2, ..RadarConfig::default() };
        for split in [Split::Train, Split::OutOfSet] {
            for class in 0..spec.n_classes() {
                for index in 0..5 {
                    sample_cube::<f64>(&spec, &cfg, split, class, index).unwrap();
                }
            }
        }
    }
}
