use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

impl EpochMetrics {
    /// Loss and accuracy fields only; timings excluded.
    pub fn scores(&self) -> [f64; 4] {
        [self.train_loss, self.train_acc, self.val_loss, self.val_acc]
    }
}

/// Inference-mode results on one split.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalMetrics {
    pub split: String,
    pub samples: usize,
    pub loss: f64,
    pub accuracy: f64,
    /// `confusion[true][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    /// Mean wall-clock milliseconds per sample, front-end included.
    pub latency_ms: f64,
}

impl EvalMetrics {
    pub fn new(split: &str, n_classes: usize, labels: &[usize], predicted: &[usize], losses: &[f64], seconds: f64) -> Self {
        let mut confusion = vec![vec![0; n_classes]; n_classes];
        for (&l, &p) in labels.iter().zip(predicted) {
            confusion[l][p] += 1;
        }
        let n = labels.len();
        let correct = labels.iter().zip(predicted).filter(|(l, p)| l == p).count();
        let mean = |s: f64| if n == 0 { 0.0 } else { s / n as f64 };
        Self {
            split: split.to_string(),
            samples: n,
            loss: mean(losses.iter().sum()),
            accuracy: mean(correct as f64),
            confusion,
            latency_ms: mean(seconds * 1e3),
        }
    }

    /// Everything except the timing.
    pub fn same_scores(&self, other: &EvalMetrics) -> bool {
        self.split == other.split
            && self.samples == other.samples
            && self.loss == other.loss
            && self.accuracy == other.accuracy
            && self.confusion == other.confusion
    }
}

/// Summary of one training run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub pipeline: String,
    pub frontend: String,
    pub seed: u64,
    pub epochs: Vec<EpochMetrics>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
    pub train_seconds: f64,
    #[serde(default)]
    pub test: Option<EvalMetrics>,
    #[serde(default)]
    pub out_of_set: Option<EvalMetrics>,
}

impl Metrics {
    /// First epoch whose validation accuracy reaches `frac` of the best one.
    pub fn epochs_to_fraction(&self, frac: f64) -> Option<usize> {
        epochs_to_fraction(&self.epochs, frac)
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string_pretty(self).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::json(path, e))
    }
}

pub fn epochs_to_fraction(epochs: &[EpochMetrics], frac: f64) -> Option<usize> {
    let best = epochs.iter().map(|e| e.val_acc).fold(f64::NEG_INFINITY, f64::max);
    epochs.iter().find(|e| e.val_acc >= frac * best - 1e-12).map(|e| e.epoch)
}

/// Index of the preferred epoch: highest validation accuracy, then lowest
/// validation loss, then earliest.
pub fn select_best(epochs: &[EpochMetrics]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, e) in epochs.iter().enumerate() {
        if best.map_or(true, |b| improves(e, &epochs[b])) {
            best = Some(i);
        }
    }
    best
}

pub(crate) fn improves(candidate: &EpochMetrics, incumbent: &EpochMetrics) -> bool {
    candidate.val_acc > incumbent.val_acc
        || (candidate.val_acc == incumbent.val_acc && candidate.val_loss < incumbent.val_loss)
}

pub const EPOCH_CSV_HEADER: [&str; 6] = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc", "seconds"];

pub fn write_epochs_csv(path: &Path, epochs: &[EpochMetrics]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    if epochs.is_empty() {
        w.write_record(EPOCH_CSV_HEADER).map_err(|e| csv_error(path, e))?;
    }
    for e in epochs {
        w.serialize(e).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn read_epochs_csv(path: &Path) -> Result<Vec<EpochMetrics>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

pub fn csv_error(path: &Path, e: csv::Error) -> Error {
    Error::Format { path: path.to_path_buf(), reason: e.to_string() }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ep(epoch: usize, val_acc: f64, val_loss: f64) -> EpochMetrics {
        EpochMetrics { epoch, train_loss: 1.0, train_acc: 0.5, val_loss, val_acc, seconds: 0.1 }
    }

    #[test]
    fn selection_prefers_accuracy_then_loss() {
        let e = [ep(1, 0.5, 0.9), ep(2, 0.8, 0.7), ep(3, 0.8, 0.6), ep(4, 0.7, 0.1), ep(5, 0.8, 0.6)];
        assert_eq!(select_best(&e), Some(2));
        assert_eq!(select_best(&[]), None);
    }

    #[test]
    fn convergence_epoch() {
        let e = [ep(1, 0.3, 1.0), ep(2, 0.86, 1.0), ep(3, 0.95, 1.0), ep(4, 0.9, 1.0)];
        assert_eq!(epochs_to_fraction(&e, 0.9), Some(2));
    }

    #[test]
    fn confusion_rows_sum_to_class_counts() {
        let m = EvalMetrics::new("test", 3, &[0, 0, 1, 2, 2, 2], &[0, 1, 1, 2, 0, 2], &[0.5; 6], 0.6);
        let rows: Vec<usize> = m.confusion.iter().map(|r| r.iter().sum()).collect();
        assert_eq!(rows, vec![2, 1, 3]);
        assert!((m.accuracy - 4.0 / 6.0).abs() < 1e-15);
        assert!((m.latency_ms - 100.0).abs() < 1e-9);
    }

    #[test]
    fn csv_round_trip_keeps_header_order() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("e.csv");
        let e = vec![ep(1, 0.5, 0.25), ep(2, 0.75, 0.125)];
        write_epochs_csv(&path, &e).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), EPOCH_CSV_HEADER.join(","));
        assert_eq!(read_epochs_csv(&path).unwrap(), e);
    }
}
