//! A tiny radar and dataset that train in seconds.

use cubelearn::radar_sim::{generate_dataset, DatasetSpec, Manifest, RadarConfig, SplitCounts};
use cubelearn::training::{FrontendKind, PipelineConfig, TrainConfig};
use std::path::Path;

pub fn tiny_radar() -> RadarConfig {
    RadarConfig {
        n_samples: 32,
        n_chirps: 16,
        n_virtual_antennas: 4,
        n_frames: 4,
        noise_std: 0.2,
        ..RadarConfig::default()
    }
}

pub fn tiny_spec(train: usize, val: usize, test: usize, out_of_set: usize) -> DatasetSpec {
    DatasetSpec { counts: SplitCounts { train, val, test, out_of_set }, ..DatasetSpec::gestures(11) }
}

pub fn tiny_dataset(dir: &Path) -> Manifest {
    generate_dataset(&tiny_spec(3, 2, 2, 2), &tiny_radar(), dir).unwrap()
}

/// `spec` (e.g. `DT:CNN2D`) with a narrow classifier.
pub fn small_pipeline(spec: &str, frontend: FrontendKind) -> PipelineConfig {
    let mut p = PipelineConfig::parse(spec, frontend, 6).unwrap();
    p.classifier.conv_channels = vec![2, 4, 4];
    p.classifier.lstm_hidden = 8;
    p.classifier.fc_sizes = vec![16, 6];
    p
}

pub fn quick_train(epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig { epochs, batch_size: 4, classifier_lr: 3e-3, module_lr: 1e-3, seed, ..TrainConfig::default() }
}
