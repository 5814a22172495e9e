//! Synthetic FMCW raw-cube generation from scripted point targets.

mod config;
mod dataset;
mod simulate;
mod trajectory;

pub use config::{RadarConfig, SPEED_OF_LIGHT};
pub use dataset::{
    generate_dataset, sample_cube, ClassTemplate, DatasetSpec, Manifest, MotionTemplate, Perturbation,
    SampleRecord, Split, SplitCounts, SplitSummary, TargetTemplate, MANIFEST_FILE, MANIFEST_VERSION,
};
pub use simulate::{clutter_removal, simulate_cube, RawDataCube};
pub use trajectory::{AngleMotion, RangeMotion, TargetTrajectory};
