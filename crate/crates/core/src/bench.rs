//! Per-sample inference latency of the fixed-DFT and learnable front-ends
//! feeding the same classifier.

use serde::{Deserialize, Serialize};
use std::path::Path;
use std::time::Instant;

use crate::error::Result;
use crate::radar_sim::RawDataCube;
use crate::scalar::Scalar;
use crate::training::{csv_error, stack, FrontendKind, Pipeline, PipelineConfig};

/// Pre-processing and classifier pairs of the standard latency table.
pub const TABLE_PIPELINES: [&str; 10] = [
    "RT:CNN2D",
    "DT:CNN2D",
    "AT:CNN2D",
    "RDT:CNN2D_LSTM",
    "RDT:CNN3D",
    "RAT:CNN2D_LSTM",
    "RAT:CNN3D",
    "DAT:CNN2D_LSTM",
    "DAT:CNN3D",
    "RDAT:CNN3D_LSTM",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub preprocess: String,
    pub classifier: String,
    pub repeats: usize,
    pub dft_ms: f64,
    /// Sample standard deviation; empty for a single repeat.
    pub dft_std_ms: Option<f64>,
    pub cubelearn_ms: f64,
    pub cubelearn_std_ms: Option<f64>,
}

fn mean_std(xs: &[f64]) -> (f64, Option<f64>) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let std = (xs.len() > 1).then(|| (xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt());
    (mean, std)
}

/// Milliseconds for one raw cube through conditioning, front-end and
/// classifier.
fn infer_once<T: Scalar>(p: &Pipeline<T>, cube: &RawDataCube<f32>) -> Result<f64> {
    let t0 = Instant::now();
    let heat = p.heatmap_of_cube(cube)?;
    let logits = p.classifier.logits(&stack(&[heat])?)?;
    std::hint::black_box(logits);
    Ok(t0.elapsed().as_secs_f64() * 1e3)
}

/// Times both arms of `config` on `cube`: one untimed warm-up each, then
/// `repeats` interleaved timed runs. Both arms share the classifier seed.
pub fn bench_pipeline<T: Scalar>(config: &PipelineConfig, cube: &RawDataCube<f32>, repeats: usize, seed: u64) -> Result<BenchRow> {
    let raw = cube.shape();
    let arm = |kind| {
        let cfg = PipelineConfig { frontend: kind, ..config.clone() };
        Pipeline::<T>::new(cfg, raw, seed)
    };
    let dft = arm(FrontendKind::Dft)?;
    let learn = arm(FrontendKind::Cubelearn)?;
    infer_once(&dft, cube)?;
    infer_once(&learn, cube)?;
    let mut a = Vec::with_capacity(repeats);
    let mut b = Vec::with_capacity(repeats);
    for _ in 0..repeats.max(1) {
        a.push(infer_once(&dft, cube)?);
        b.push(infer_once(&learn, cube)?);
    }
    let (dft_ms, dft_std_ms) = mean_std(&a);
    let (cubelearn_ms, cubelearn_std_ms) = mean_std(&b);
    Ok(BenchRow {
        preprocess: config.kind().to_string(),
        classifier: config.classifier.kind.to_string(),
        repeats: a.len(),
        dft_ms,
        dft_std_ms,
        cubelearn_ms,
        cubelearn_std_ms,
    })
}

pub fn write_bench_csv(path: &Path, rows: &[BenchRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    for r in rows {
        w.serialize(r).map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| crate::error::Error::io(path, e))
}

pub fn read_bench_csv(path: &Path) -> Result<Vec<BenchRow>> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
    r.deserialize().map(|row| row.map_err(|e| csv_error(path, e))).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn single_repeat_has_no_spread() {
        assert_eq!(mean_std(&[2.0]), (2.0, None));
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s.unwrap() - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn csv_has_header_and_empty_std() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("b.csv");
        let row = BenchRow {
            preprocess: "DT".into(),
            classifier: "CNN2D".into(),
            repeats: 1,
            dft_ms: 1.0,
            dft_std_ms: None,
            cubelearn_ms: 2.0,
            cubelearn_std_ms: None,
        };
        write_bench_csv(&path, &[row.clone()]).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        assert_eq!(text.lines().next().unwrap(), "preprocess,classifier,repeats,dft_ms,dft_std_ms,cubelearn_ms,cubelearn_std_ms");
        assert_eq!(text.lines().nth(1).unwrap(), "DT,CNN2D,1,1.0,,2.0,");
        assert_eq!(read_bench_csv(&path).unwrap(), vec![row]);
    }
}
