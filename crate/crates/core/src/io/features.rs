//! Per-sample front-end outputs for external embedding tools.
//!
//! Narrow rows go straight into the CSV as `label,f0,f1,...`. Rows wider
//! than [`MAX_CSV_FIELDS`] are written to a sidecar `<out>.bin` of
//! little-endian f64 rows, and the CSV becomes an index
//! `index,label,offset,length` (offset and length in values).

use std::io::Write;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::scalar::Scalar;
use crate::training::{csv_error, heatmaps, Example, Pipeline};

pub const MAX_CSV_FIELDS: usize = 65_536;

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureExport {
    pub rows: usize,
    pub width: usize,
    pub sidecar: Option<PathBuf>,
}

pub fn sidecar_path(out: &Path) -> PathBuf {
    let mut s = out.as_os_str().to_owned();
    s.push(".bin");
    PathBuf::from(s)
}

pub fn export_features<T: Scalar>(pipeline: &Pipeline<T>, examples: &[Example<T>], out: &Path) -> Result<FeatureExport> {
    let width: usize = pipeline.heatmap_shape().iter().product();
    let mut w = csv::Writer::from_path(out).map_err(|e| csv_error(out, e))?;
    let wide = width + 1 > MAX_CSV_FIELDS;
    let header: Vec<String> = if wide {
        ["index", "label", "offset", "length"].map(String::from).to_vec()
    } else {
        std::iter::once("label".to_string()).chain((0..width).map(|i| format!("f{i}"))).collect()
    };
    w.write_record(&header).map_err(|e| csv_error(out, e))?;
    let side = sidecar_path(out);
    let mut bin = if wide {
        let f = std::fs::File::create(&side).map_err(|e| Error::io(&side, e))?;
        Some(std::io::BufWriter::new(f))
    } else {
        None
    };
    // Chunked so wide outputs never sit in memory all at once.
    for (c, chunk) in examples.chunks(16).enumerate() {
        let heat = heatmaps(pipeline, chunk)?;
        for (k, (ex, h)) in chunk.iter().zip(&heat).enumerate() {
            let i = c * 16 + k;
            let vals = h.data().iter().map(|v| v.to_f64().unwrap_or(f64::NAN));
            match bin.as_mut() {
                Some(b) => {
                    for v in vals {
                        b.write_all(&v.to_le_bytes()).map_err(|e| Error::io(&side, e))?;
                    }
                    let rec = [i.to_string(), ex.label.to_string(), (i * width).to_string(), width.to_string()];
                    w.write_record(&rec).map_err(|e| csv_error(out, e))?;
                }
                None => {
                    let rec: Vec<String> = std::iter::once(ex.label.to_string()).chain(vals.map(|v| v.to_string())).collect();
                    w.write_record(&rec).map_err(|e| csv_error(out, e))?;
                }
            }
        }
    }
    w.flush().map_err(|e| Error::io(out, e))?;
    if let Some(mut b) = bin {
        b.flush().map_err(|e| Error::io(&side, e))?;
    }
    Ok(FeatureExport { rows: examples.len(), width, sidecar: wide.then_some(side) })
}

/// Reads an export back as `(label, features)` rows.
pub fn read_features(out: &Path) -> Result<Vec<(usize, Vec<f64>)>> {
    let mut r = csv::Reader::from_path(out).map_err(|e| csv_error(out, e))?;
    let header = r.headers().map_err(|e| csv_error(out, e))?.clone();
    let bad = |reason: String| Error::Format { path: out.to_path_buf(), reason };
    let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("'{s}': {e}")));
    let int = |s: &str| s.parse::<usize>().map_err(|e| bad(format!("'{s}': {e}")));
    let wide = header.get(0) == Some("index");
    let side = if wide { Some(std::fs::read(sidecar_path(out)).map_err(|e| Error::io(sidecar_path(out), e))?) } else { None };
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_error(out, e))?;
        match &side {
            Some(bytes) => {
                let (off, len) = (int(&rec[2])?, int(&rec[3])?);
                let span = bytes.get(off * 8..(off + len) * 8).ok_or_else(|| bad(format!("row {} outside the sidecar", &rec[0])))?;
                let vals = span.chunks_exact(8).map(|b| f64::from_le_bytes(b.try_into().expect("8 bytes"))).collect();
                rows.push((int(&rec[1])?, vals));
            }
            None => {
                let vals = rec.iter().skip(1).map(num).collect::<Result<Vec<_>>>()?;
                rows.push((int(&rec[0])?, vals));
            }
        }
    }
    Ok(rows)
}
