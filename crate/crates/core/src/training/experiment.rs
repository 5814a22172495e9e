//! One complete run: configure, load, train, evaluate.

use serde::{Deserialize, Serialize};
use std::path::Path;

use super::data::{load_split, manifest_cube_shape};
use super::metrics::{EvalMetrics, Metrics};
use super::pipeline::{Example, FrontendKind, Pipeline, PipelineConfig};
use super::train::{evaluate, train, TrainConfig};
use crate::cubelearn::{Activation, InitStrategy, TargetFocus};
use crate::dft_oracle::RangeAggregation;
use crate::error::{Error, Result};
use crate::radar_sim::{Manifest, Split};
use crate::scalar::Scalar;

/// Optional front-end overrides in a run configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrontendOptions {
    pub init: Option<InitStrategy>,
    pub activation_between: Option<Activation>,
    pub log_after_modulus: Option<bool>,
    pub aggregation: Option<RangeAggregation>,
    pub angle_out: Option<usize>,
    pub target_focus: Option<TargetFocus>,
}

/// Optional classifier overrides in a run configuration file.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassifierOptions {
    pub conv_channels: Option<Vec<usize>>,
    pub kernel_size: Option<usize>,
    pub pool: Option<usize>,
    pub lstm_hidden: Option<usize>,
    /// Hidden dense widths; the class count is appended.
    pub fc_hidden: Option<Vec<usize>>,
}

/// Contents of a `--config` file: training settings plus optional
/// pipeline overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(flatten)]
    pub train: TrainConfig,
    #[serde(default)]
    pub frontend: FrontendOptions,
    #[serde(default)]
    pub classifier: ClassifierOptions,
    #[serde(default)]
    pub clutter_removal: bool,
    #[serde(default)]
    pub reduce: Option<[f64; 2]>,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let cfg: RunConfig = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        cfg.train.validate()?;
        Ok(cfg)
    }

    /// Pipeline for `spec` (`KIND:CLASSIFIER`) with these overrides applied.
    /// The front-end learning rate always follows `train.module_lr`.
    pub fn pipeline(&self, spec: &str, frontend: FrontendKind, n_classes: usize) -> Result<PipelineConfig> {
        let mut p = PipelineConfig::parse(spec, frontend, n_classes)?;
        let f = &self.frontend;
        let c = &mut p.cubelearn;
        if let Some(v) = f.init {
            c.init = v;
        }
        if let Some(v) = f.activation_between {
            c.activation_between = v;
        }
        if let Some(v) = f.log_after_modulus {
            c.log_after_modulus = v;
        }
        if let Some(v) = f.aggregation {
            c.aggregation = v;
        }
        if let Some(v) = f.angle_out {
            c.angle_out = v;
        }
        if let Some(v) = f.target_focus {
            c.target_focus = v;
        }
        c.module_lr = self.train.module_lr;
        let o = &self.classifier;
        let s = &mut p.classifier;
        if let Some(v) = &o.conv_channels {
            s.conv_channels = v.clone();
        }
        if let Some(v) = o.kernel_size {
            s.kernel_size = v;
        }
        if let Some(v) = o.pool {
            s.pool = v;
        }
        if let Some(v) = o.lstm_hidden {
            s.lstm_hidden = v;
        }
        if let Some(v) = &o.fc_hidden {
            s.fc_sizes = v.iter().copied().chain([n_classes]).collect();
        }
        s.validate()?;
        p.clutter_removal = self.clutter_removal;
        p.reduce = self.reduce;
        Ok(p)
    }
}

/// Train and validation examples prepared for one pipeline configuration.
/// Preparation does not depend on the seed, so one set serves every seed.
pub struct PreparedData<T: Scalar> {
    pub raw_shape: [usize; 4],
    pub train: Vec<Example<T>>,
    pub val: Vec<Example<T>>,
}

impl<T: Scalar> PreparedData<T> {
    pub fn load(config: &PipelineConfig, dir: &Path, manifest: &Manifest) -> Result<Self> {
        let raw_shape = manifest_cube_shape(manifest);
        let probe = Pipeline::<T>::new(config.clone(), raw_shape, 0)?;
        Ok(Self {
            raw_shape,
            train: load_split(&probe, dir, manifest, Split::Train)?,
            val: load_split(&probe, dir, manifest, Split::Val)?,
        })
    }
}

/// Trains with `cfg.seed` as both initialization and shuffle seed, then
/// evaluates `eval_splits` one at a time (each is loaded, scored, dropped).
pub fn run_experiment<T: Scalar>(
    config: &PipelineConfig,
    cfg: &TrainConfig,
    data: &PreparedData<T>,
    dir: &Path,
    manifest: &Manifest,
    eval_splits: &[Split],
) -> Result<(Pipeline<T>, Metrics)> {
    let mut pipeline = Pipeline::<T>::new(config.clone(), data.raw_shape, cfg.seed)?;
    let outcome = train(&mut pipeline, &data.train, &data.val, cfg)?;
    let best = outcome.best().clone();
    let mut metrics = Metrics {
        pipeline: config.name(),
        frontend: config.frontend.name().to_string(),
        seed: cfg.seed,
        epochs: outcome.epochs.clone(),
        best_epoch: outcome.best_epoch,
        best_val_acc: best.val_acc,
        best_val_loss: best.val_loss,
        train_seconds: outcome.seconds,
        test: None,
        out_of_set: None,
    };
    for &split in eval_splits {
        let m = evaluate_split(&pipeline, dir, manifest, split, cfg.batch_size)?;
        match split {
            Split::Test => metrics.test = Some(m),
            Split::OutOfSet => metrics.out_of_set = Some(m),
            _ => {}
        }
    }
    Ok((pipeline, metrics))
}

pub fn evaluate_split<T: Scalar>(
    pipeline: &Pipeline<T>,
    dir: &Path,
    manifest: &Manifest,
    split: Split,
    batch_size: usize,
) -> Result<EvalMetrics> {
    check_compatible(pipeline, manifest)?;
    let examples = load_split(pipeline, dir, manifest, split)?;
    evaluate(pipeline, &examples, split.name(), batch_size)
}

/// A checkpoint only applies to datasets with its cube shape and class count.
pub fn check_compatible<T: Scalar>(pipeline: &Pipeline<T>, manifest: &Manifest) -> Result<()> {
    let shape = manifest_cube_shape(manifest);
    if shape != pipeline.raw_shape {
        return Err(Error::Checkpoint(format!(
            "dataset cubes are {shape:?} but the model expects {:?}",
            pipeline.raw_shape
        )));
    }
    if manifest.n_classes != pipeline.n_classes() {
        return Err(Error::Checkpoint(format!(
            "dataset has {} classes but the model predicts {}",
            manifest.n_classes,
            pipeline.n_classes()
        )));
    }
    Ok(())
}
