//! Epoch loop with separate learning rates for the front-end and the
//! classifier, plus inference-mode evaluation.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::time::Instant;

use super::adam::{adam_step, AdamConfig, AdamState};
use super::metrics::{improves, EpochMetrics, EvalMetrics};
use super::pipeline::{stack, Example, ExampleInput, Pipeline};
use crate::classifier::{cross_entropy, cross_entropy_rows, Mode};
use crate::ctensor::{Tape, Tensor, Value, Var};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::rng;
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub classifier_lr: f64,
    /// Learning rate of the front-end weights; 0 keeps them fixed.
    pub module_lr: f64,
    pub seed: u64,
    pub adam: AdamConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { epochs: 30, batch_size: 8, classifier_lr: 3e-4, module_lr: 1e-3, seed: 0, adam: AdamConfig::default() }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be at least 1".into()));
        }
        for (name, lr) in [("classifier_lr", self.classifier_lr), ("module_lr", self.module_lr)] {
            if !(lr.is_finite() && lr >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and non-negative, got {lr}")));
            }
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        Ok(())
    }
}

/// Per-epoch history and which epoch's parameters were kept.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainOutcome {
    pub epochs: Vec<EpochMetrics>,
    /// 1-based epoch of the retained snapshot.
    pub best_epoch: usize,
    pub seconds: f64,
}

impl TrainOutcome {
    pub fn best(&self) -> &EpochMetrics {
        &self.epochs[self.best_epoch - 1]
    }
}

struct Snapshot<T> {
    frontend: Option<ParamSet<T>>,
    params: ParamSet<T>,
    buffers: ParamSet<T>,
}

impl<T: Scalar> Snapshot<T> {
    fn take(p: &Pipeline<T>) -> Self {
        Self {
            frontend: p.frontend.as_ref().map(|f| f.params().clone()),
            params: p.classifier.params().clone(),
            buffers: p.classifier.buffers().clone(),
        }
    }

    fn restore(self, p: &mut Pipeline<T>) -> Result<()> {
        if let (Some(f), Some(saved)) = (p.frontend.as_mut(), self.frontend.as_ref()) {
            f.set_params(saved)?;
        }
        p.classifier.params_mut().assign(&self.params)?;
        p.classifier.buffers_mut().assign(&self.buffers)
    }
}

fn check_inputs<T: Scalar>(p: &Pipeline<T>, examples: &[Example<T>], what: &str) -> Result<()> {
    let heat = p.heatmap_shape();
    let raw = p.frontend.as_ref().map(|f| f.input_shape());
    for (i, ex) in examples.iter().enumerate() {
        if ex.label >= p.n_classes() {
            return Err(Error::Config(format!("{what} example {i}: label {} outside 0..{}", ex.label, p.n_classes())));
        }
        let (got, want) = match (&ex.input, &raw) {
            (ExampleInput::Heatmap(h), _) => (h.shape(), heat.as_slice()),
            (ExampleInput::Raw(x), Some(r)) => (x.shape(), r.as_slice()),
            (ExampleInput::Raw(_), None) => {
                return Err(Error::Config(format!("{what} example {i} is a raw cube but the front-end is fixed")))
            }
        };
        if got != want {
            return Err(Error::Dimension { op: "training example", left: got.to_vec(), right: want.to_vec() });
        }
    }
    Ok(())
}

/// Heatmaps with the current front-end weights, in example order.
pub fn heatmaps<T: Scalar>(p: &Pipeline<T>, examples: &[Example<T>]) -> Result<Vec<Tensor<T>>> {
    examples.par_iter().map(|ex| p.heatmap(&ex.input)).collect()
}

fn argmax<T: Scalar>(row: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in row.iter().enumerate() {
        if *v > row[best] {
            best = i;
        }
    }
    best
}

/// Inference-mode predictions and per-sample losses for heatmaps.
fn classify<T: Scalar>(p: &Pipeline<T>, heat: &[Tensor<T>], labels: &[usize], batch: usize) -> Result<(Vec<usize>, Vec<f64>)> {
    let mut pred = Vec::with_capacity(heat.len());
    let mut loss = Vec::with_capacity(heat.len());
    for (h, l) in heat.chunks(batch).zip(labels.chunks(batch)) {
        let logits = p.classifier.logits(&stack(h)?)?;
        let k = logits.shape()[1];
        pred.extend(logits.data().chunks_exact(k).map(argmax));
        loss.extend(cross_entropy_rows(&logits, l)?.into_iter().map(|v| v.to_f64().unwrap_or(f64::NAN)));
    }
    Ok((pred, loss))
}

fn add_grad<T: Scalar>(acc: &mut Option<Value<T>>, g: Option<Value<T>>) {
    match (acc.as_mut(), g) {
        (_, None) => {}
        (None, Some(g)) => *acc = Some(g),
        (Some(a), Some(g)) => {
            a.add_assign(&g).expect("gradients of one parameter share a shape");
        }
    }
}

/// Per-sample front-end passes kept alive until the classifier's input
/// gradient is known.
struct FrontPass<T: Scalar> {
    tape: Tape<T>,
    out: Var,
    vars: Vec<Var>,
}

struct StepResult {
    loss_sum: f64,
    correct: usize,
}

fn train_step<T: Scalar>(
    p: &mut Pipeline<T>,
    inputs: &[&ExampleInput<T>],
    cached: Option<Vec<Tensor<T>>>,
    labels: &[usize],
    cfg: &TrainConfig,
    clf_state: &mut AdamState<T>,
    fe_state: Option<&mut AdamState<T>>,
) -> Result<StepResult> {
    let learn = fe_state.is_some();
    let fronts: Vec<FrontPass<T>> = if learn {
        let fe = p.frontend.as_ref().expect("learnable front-end");
        inputs
            .par_iter()
            .map(|input| {
                let ExampleInput::Raw(x) = input else {
                    return Err(Error::Parameter("learnable front-end needs raw inputs".into()));
                };
                let mut tape = Tape::new();
                let vars = fe.params().register(&mut tape);
                let xv = tape.constant(x.cast::<T>());
                let out = fe.forward(&mut tape, xv, &vars)?;
                Ok(FrontPass { tape, out, vars })
            })
            .collect::<Result<_>>()?
    } else {
        Vec::new()
    };
    let heat = match cached {
        Some(h) => h,
        None => fronts.iter().map(|f| f.tape.real(f.out).cloned()).collect::<Result<_>>()?,
    };
    let batch = stack(&heat)?;
    drop(heat);

    let mut tape = Tape::new();
    let cvars = p.classifier.params().register(&mut tape);
    let xv = if learn { tape.param(batch) } else { tape.constant(batch) };
    let (logits, stats) = p.classifier.forward(&mut tape, xv, &cvars, Mode::Train)?;
    let loss = cross_entropy(&mut tape, logits, labels)?;
    let loss_value = tape.real(loss)?.data()[0].to_f64().unwrap_or(f64::NAN);
    if !loss_value.is_finite() {
        return Err(Error::Training(format!("non-finite training loss {loss_value} at step {}", clf_state.step + 1)));
    }
    let lv = tape.real(logits)?;
    let k = lv.shape()[1];
    let correct = lv.data().chunks_exact(k).zip(labels).filter(|(row, &l)| argmax(row) == l).count();

    let mut grads = tape.backward(loss)?;
    let clf_grads: Vec<Option<Value<T>>> = cvars.iter().map(|v| grads.take(*v)).collect();
    let gx = if learn { grads.take(xv) } else { None };
    drop(grads);
    drop(tape);

    if let Some(fe_state) = fe_state {
        let gx = match gx {
            Some(Value::Real(g)) => g,
            _ => return Err(Error::Training("missing gradient for the front-end output".into())),
        };
        let per = gx.len() / fronts.len();
        let sample_shape = &gx.shape()[1..];
        let per_sample: Vec<Vec<Option<Value<T>>>> = fronts
            .into_par_iter()
            .zip(gx.data().par_chunks(per))
            .map(|(f, g)| {
                let seed = Tensor::from_vec(sample_shape, g.to_vec())?;
                let mut gr = f.tape.backward_from(f.out, Value::Real(seed))?;
                Ok(f.vars.iter().map(|v| gr.take(*v)).collect())
            })
            .collect::<Result<_>>()?;
        let n_fe = p.frontend.as_ref().map_or(0, |f| f.params().len());
        let mut fe_grads: Vec<Option<Value<T>>> = (0..n_fe).map(|_| None).collect();
        for sample in per_sample {
            for (acc, g) in fe_grads.iter_mut().zip(sample) {
                add_grad(acc, g);
            }
        }
        let fe = p.frontend.as_mut().expect("learnable front-end");
        adam_step(fe.params_mut(), &fe_grads, fe_state, cfg.module_lr, &cfg.adam)?;
    }
    adam_step(p.classifier.params_mut(), &clf_grads, clf_state, cfg.classifier_lr, &cfg.adam)?;
    p.classifier.update_running_stats(&stats)?;
    Ok(StepResult { loss_sum: loss_value * labels.len() as f64, correct })
}

/// Trains `pipeline` in place and leaves it holding the parameters of the
/// epoch with the best validation accuracy (lower validation loss on ties).
///
/// The front-end is trained only when `cfg.module_lr > 0`; otherwise its
/// heatmaps are computed once and reused, which gives the same numbers as
/// recomputing them every step.
pub fn train<T: Scalar>(
    pipeline: &mut Pipeline<T>,
    train_set: &[Example<T>],
    val_set: &[Example<T>],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || val_set.is_empty() {
        return Err(Error::Config(format!(
            "training needs non-empty train and validation splits ({} / {})",
            train_set.len(),
            val_set.len()
        )));
    }
    check_inputs(pipeline, train_set, "train")?;
    check_inputs(pipeline, val_set, "validation")?;
    let learn = pipeline.frontend.is_some() && cfg.module_lr > 0.0;
    let start = Instant::now();

    let train_labels: Vec<usize> = train_set.iter().map(|e| e.label).collect();
    let val_labels: Vec<usize> = val_set.iter().map(|e| e.label).collect();
    let frozen_train = if learn { None } else { Some(heatmaps(pipeline, train_set)?) };
    let frozen_val = if learn { None } else { Some(heatmaps(pipeline, val_set)?) };

    let mut clf_state = AdamState::new(pipeline.classifier.params());
    let mut fe_state = if learn { pipeline.frontend.as_ref().map(|f| AdamState::new(f.params())) } else { None };

    let mut epochs = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(usize, Snapshot<T>)> = None;
    for epoch in 1..=cfg.epochs {
        let t0 = Instant::now();
        let mut order: Vec<usize> = (0..train_set.len()).collect();
        order.shuffle(&mut rng::stream(cfg.seed, "shuffle", epoch as u64));
        let mut loss_sum = 0.0;
        let mut correct = 0;
        for idx in order.chunks(cfg.batch_size) {
            let labels: Vec<usize> = idx.iter().map(|&i| train_labels[i]).collect();
            let inputs: Vec<&ExampleInput<T>> = idx.iter().map(|&i| &train_set[i].input).collect();
            let cached = frozen_train.as_ref().map(|h| idx.iter().map(|&i| h[i].clone()).collect());
            let r = train_step(pipeline, &inputs, cached, &labels, cfg, &mut clf_state, fe_state.as_mut())?;
            loss_sum += r.loss_sum;
            correct += r.correct;
        }
        let val_heat = match &frozen_val {
            Some(h) => h.clone(),
            None => heatmaps(pipeline, val_set)?,
        };
        let (pred, losses) = classify(pipeline, &val_heat, &val_labels, cfg.batch_size)?;
        let val_loss = losses.iter().sum::<f64>() / losses.len() as f64;
        if !val_loss.is_finite() {
            return Err(Error::Training(format!("non-finite validation loss at epoch {epoch}")));
        }
        let val_correct = pred.iter().zip(&val_labels).filter(|(a, b)| a == b).count();
        let n = train_set.len() as f64;
        let m = EpochMetrics {
            epoch,
            train_loss: loss_sum / n,
            train_acc: correct as f64 / n,
            val_loss,
            val_acc: val_correct as f64 / val_set.len() as f64,
            seconds: t0.elapsed().as_secs_f64(),
        };
        if best.as_ref().map_or(true, |(b, _)| improves(&m, &epochs[*b - 1])) {
            best = Some((epoch, Snapshot::take(pipeline)));
        }
        epochs.push(m);
    }
    let (best_epoch, snap) = best.expect("at least one epoch");
    snap.restore(pipeline)?;
    Ok(TrainOutcome { epochs, best_epoch, seconds: start.elapsed().as_secs_f64() })
}

/// Inference-mode accuracy, loss, confusion matrix and mean per-sample
/// latency (front-end plus classifier) on one split.
pub fn evaluate<T: Scalar>(pipeline: &Pipeline<T>, examples: &[Example<T>], split: &str, batch_size: usize) -> Result<EvalMetrics> {
    check_inputs(pipeline, examples, split)?;
    let labels: Vec<usize> = examples.iter().map(|e| e.label).collect();
    let start = Instant::now();
    let (pred, losses) = if examples.is_empty() {
        (Vec::new(), Vec::new())
    } else {
        let heat = heatmaps(pipeline, examples)?;
        classify(pipeline, &heat, &labels, batch_size.max(1))?
    };
    let seconds = start.elapsed().as_secs_f64();
    Ok(EvalMetrics::new(split, pipeline.n_classes(), &labels, &pred, &losses, seconds))
}
