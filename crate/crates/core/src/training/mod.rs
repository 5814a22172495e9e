//! Optimization, split loading, train/evaluate loops and metrics.

pub mod adam;
pub mod data;
pub mod experiment;
pub mod metrics;
pub mod pipeline;
pub mod train;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use experiment::{check_compatible, evaluate_split, run_experiment, ClassifierOptions, FrontendOptions, PreparedData, RunConfig};
pub use data::{load_split, manifest_cube_shape};
pub use metrics::{csv_error, read_epochs_csv, write_epochs_csv, epochs_to_fraction, select_best, EpochMetrics, EvalMetrics, Metrics};
pub use pipeline::{stack, Example, ExampleInput, FrontendKind, Pipeline, PipelineConfig};
pub use train::{evaluate, heatmaps, train, TrainConfig, TrainOutcome};
