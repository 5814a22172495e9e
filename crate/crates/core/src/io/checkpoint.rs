//! Checkpoint directories: `checkpoint.json` plus a `params.bin` table.
//!
//! `params.bin` layout (little-endian):
//!
//! ```text
//! magic "CLPB", version u32, entry count u32, then per entry:
//!   name length u32, name (UTF-8), kind u8 (0 real, 1 complex),
//!   rank u32, dims u64 x rank,
//!   values f64 x numel (complex: all real parts, then all imaginary parts)
//! ```
//!
//! Front-end entries keep their own names (`cubelearn.*`); classifier
//! parameters and normalization buffers are prefixed with `classifier.`.

use serde::{Deserialize, Serialize};
use std::path::Path;

use crate::ctensor::{ComplexTensor, Tensor, Value};
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::scalar::{lit, Scalar};
use crate::training::{Metrics, Pipeline, PipelineConfig, TrainConfig};

pub const MANIFEST_FILE: &str = "checkpoint.json";
pub const PARAMS_FILE: &str = "params.bin";
pub const PARAMS_MAGIC: &[u8; 4] = b"CLPB";
pub const FORMAT_VERSION: u32 = 1;
const CLASSIFIER_PREFIX: &str = "classifier.";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorEntry {
    pub name: String,
    pub complex: bool,
    pub shape: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckpointManifest {
    pub format_version: u32,
    pub pipeline: PipelineConfig,
    pub train: TrainConfig,
    /// Raw cube shape `[frames, antennas, chirps, samples]` the pipeline expects.
    pub raw_shape: [usize; 4],
    /// Seed used to initialize the parameters.
    pub seed: u64,
    #[serde(default)]
    pub class_names: Vec<String>,
    #[serde(default)]
    pub metrics: Option<Metrics>,
    pub tensors: Vec<TensorEntry>,
}

/// Named tensors in checkpoint order, as 64-bit values.
pub type NamedTensors = Vec<(String, Value<f64>)>;

fn to_f64<T: Scalar>(v: &Value<T>) -> Value<f64> {
    match v {
        Value::Real(t) => Value::Real(t.cast()),
        Value::Complex(c) => Value::Complex(c.cast()),
    }
}

fn from_f64<T: Scalar>(v: &Value<f64>) -> Value<T> {
    match v {
        Value::Real(t) => Value::Real(Tensor::from_vec(t.shape(), t.data().iter().map(|&x| lit(x)).collect()).expect("same shape")),
        Value::Complex(c) => Value::Complex(
            ComplexTensor::from_parts(c.shape(), c.re().iter().map(|&x| lit(x)).collect(), c.im().iter().map(|&x| lit(x)).collect())
                .expect("same shape"),
        ),
    }
}

/// Every tensor of a pipeline under its checkpoint name.
pub fn pipeline_tensors<T: Scalar>(p: &Pipeline<T>) -> NamedTensors {
    let mut out = Vec::new();
    if let Some(f) = &p.frontend {
        out.extend(f.params().iter().map(|e| (e.name.clone(), to_f64(&e.value))));
    }
    for set in [p.classifier.params(), p.classifier.buffers()] {
        out.extend(set.iter().map(|e| (format!("{CLASSIFIER_PREFIX}{}", e.name), to_f64(&e.value))));
    }
    out
}

pub fn encode_tensors(tensors: &[(String, Value<f64>)]) -> Vec<u8> {
    let mut out = Vec::new();
    out.extend_from_slice(PARAMS_MAGIC);
    out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
    out.extend_from_slice(&(tensors.len() as u32).to_le_bytes());
    for (name, v) in tensors {
        out.extend_from_slice(&(name.len() as u32).to_le_bytes());
        out.extend_from_slice(name.as_bytes());
        out.push(v.is_complex() as u8);
        out.extend_from_slice(&(v.shape().len() as u32).to_le_bytes());
        for &d in v.shape() {
            out.extend_from_slice(&(d as u64).to_le_bytes());
        }
        let mut put = |xs: &[f64]| xs.iter().for_each(|x| out.extend_from_slice(&x.to_le_bytes()));
        match v {
            Value::Real(t) => put(t.data()),
            Value::Complex(c) => {
                put(c.re());
                put(c.im());
            }
        }
    }
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
    path: &'a Path,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.bytes.len()).ok_or_else(|| Error::Format {
            path: self.path.to_path_buf(),
            reason: format!("truncated at byte {}", self.pos),
        })?;
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }

    fn f64s(&mut self, n: usize) -> Result<Vec<f64>> {
        let raw = self.take(n.checked_mul(8).ok_or_else(|| self.bad("size overflow".into()))?)?;
        Ok(raw.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect())
    }

    fn bad(&self, reason: String) -> Error {
        Error::Format { path: self.path.to_path_buf(), reason }
    }
}

pub fn decode_tensors(bytes: &[u8], path: &Path) -> Result<NamedTensors> {
    let mut r = Reader { bytes, pos: 0, path };
    if r.take(4)? != PARAMS_MAGIC {
        return Err(r.bad("bad magic".into()));
    }
    let version = r.u32()?;
    if version != FORMAT_VERSION {
        return Err(r.bad(format!("unsupported version {version}")));
    }
    let count = r.u32()? as usize;
    let mut out = Vec::with_capacity(count);
    for _ in 0..count {
        let len = r.u32()? as usize;
        let name = String::from_utf8(r.take(len)?.to_vec()).map_err(|e| r.bad(e.to_string()))?;
        let complex = match r.take(1)?[0] {
            0 => false,
            1 => true,
            k => return Err(r.bad(format!("unknown kind {k} for '{name}'"))),
        };
        let rank = r.u32()? as usize;
        let shape = (0..rank).map(|_| r.u64().map(|d| d as usize)).collect::<Result<Vec<_>>>()?;
        let n = shape.iter().try_fold(1usize, |a, &d| a.checked_mul(d)).ok_or_else(|| r.bad("size overflow".into()))?;
        let value = if complex {
            let re = r.f64s(n)?;
            let im = r.f64s(n)?;
            Value::Complex(ComplexTensor::from_parts(&shape, re, im)?)
        } else {
            Value::Real(Tensor::from_vec(&shape, r.f64s(n)?)?)
        };
        out.push((name, value));
    }
    if r.pos != bytes.len() {
        return Err(r.bad(format!("{} trailing bytes", bytes.len() - r.pos)));
    }
    Ok(out)
}

fn fill<T: Scalar>(set: &mut ParamSet<T>, prefix: &str, table: &NamedTensors) -> Result<()> {
    let mut loaded = ParamSet::new();
    for p in set.iter() {
        let key = format!("{prefix}{}", p.name);
        let (_, v) = table
            .iter()
            .find(|(n, _)| *n == key)
            .ok_or_else(|| Error::Checkpoint(format!("parameter '{key}' missing from the checkpoint")))?;
        loaded.push(p.name.clone(), from_f64::<T>(v));
    }
    set.assign(&loaded)
}

/// Writes `pipeline` with its training settings and metrics into `dir`.
pub fn save_checkpoint<T: Scalar>(
    dir: &Path,
    pipeline: &Pipeline<T>,
    train: &TrainConfig,
    seed: u64,
    class_names: &[String],
    metrics: Option<&Metrics>,
) -> Result<CheckpointManifest> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let tensors = pipeline_tensors(pipeline);
    let manifest = CheckpointManifest {
        format_version: FORMAT_VERSION,
        pipeline: pipeline.config.clone(),
        train: train.clone(),
        raw_shape: pipeline.raw_shape,
        seed,
        class_names: class_names.to_vec(),
        metrics: metrics.cloned(),
        tensors: tensors
            .iter()
            .map(|(n, v)| TensorEntry { name: n.clone(), complex: v.is_complex(), shape: v.shape().to_vec() })
            .collect(),
    };
    let mpath = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::json(&mpath, e))?;
    std::fs::write(&mpath, text).map_err(|e| Error::io(&mpath, e))?;
    let ppath = dir.join(PARAMS_FILE);
    std::fs::write(&ppath, encode_tensors(&tensors)).map_err(|e| Error::io(&ppath, e))?;
    Ok(manifest)
}

pub fn read_manifest(dir: &Path) -> Result<CheckpointManifest> {
    let path = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let m: CheckpointManifest = serde_json::from_str(&text).map_err(|e| Error::json(&path, e))?;
    if m.format_version != FORMAT_VERSION {
        return Err(Error::Checkpoint(format!("checkpoint format {} unsupported", m.format_version)));
    }
    Ok(m)
}

/// Rebuilds the pipeline recorded in `dir` and loads its tensors.
pub fn load_checkpoint<T: Scalar>(dir: &Path) -> Result<(Pipeline<T>, CheckpointManifest)> {
    let manifest = read_manifest(dir)?;
    let ppath = dir.join(PARAMS_FILE);
    let bytes = std::fs::read(&ppath).map_err(|e| Error::io(&ppath, e))?;
    let table = decode_tensors(&bytes, &ppath)?;
    for entry in &manifest.tensors {
        match table.iter().find(|(n, _)| *n == entry.name) {
            Some((_, v)) if v.shape() == entry.shape.as_slice() && v.is_complex() == entry.complex => {}
            Some((_, v)) => {
                return Err(Error::Checkpoint(format!(
                    "'{}' is {:?} in the table but {:?} in the manifest",
                    entry.name,
                    v.shape(),
                    entry.shape
                )))
            }
            None => return Err(Error::Checkpoint(format!("'{}' listed in the manifest but not stored", entry.name))),
        }
    }
    if table.len() != manifest.tensors.len() {
        return Err(Error::Checkpoint(format!(
            "{} stored tensors but {} listed in the manifest",
            table.len(),
            manifest.tensors.len()
        )));
    }
    let mut pipeline = Pipeline::<T>::new(manifest.pipeline.clone(), manifest.raw_shape, manifest.seed)
        .map_err(|e| Error::Checkpoint(format!("recorded pipeline is invalid: {e}")))?;
    if let Some(f) = pipeline.frontend.as_mut() {
        fill(f.params_mut(), "", &table)?;
    }
    fill(pipeline.classifier.params_mut(), CLASSIFIER_PREFIX, &table)?;
    fill(pipeline.classifier.buffers_mut(), CLASSIFIER_PREFIX, &table)?;
    Ok((pipeline, manifest))
}
