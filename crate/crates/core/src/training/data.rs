//! Loading dataset splits into pipeline-ready examples.

use rayon::prelude::*;
use std::path::Path;

use super::pipeline::{Example, Pipeline};
use crate::error::{Error, Result};
use crate::io::cube_file::read_cube;
use crate::radar_sim::{Manifest, Split};
use crate::scalar::Scalar;

/// Raw cube shape `[frames, antennas, chirps, samples]` recorded in a manifest.
pub fn manifest_cube_shape(m: &Manifest) -> [usize; 4] {
    let c = &m.config;
    [c.n_frames, c.n_virtual_antennas, c.n_chirps, c.n_samples]
}

/// Reads every cube of `split` and prepares it for `pipeline`, keeping the
/// manifest order.
pub fn load_split<T: Scalar>(
    pipeline: &Pipeline<T>,
    dir: &Path,
    manifest: &Manifest,
    split: Split,
) -> Result<Vec<Example<T>>> {
    let records: Vec<_> = manifest.records(split).collect();
    let n_classes = pipeline.n_classes();
    records
        .par_iter()
        .map(|r| {
            let path = dir.join(&r.file);
            let cube = read_cube::<f32>(&path)?;
            if cube.label != r.label {
                return Err(Error::Format {
                    path,
                    reason: format!("label {} disagrees with manifest label {}", cube.label, r.label),
                });
            }
            let label = usize::try_from(r.label)
                .ok()
                .filter(|&l| l < n_classes)
                .ok_or_else(|| Error::Config(format!("label {} outside 0..{n_classes}", r.label)))?;
            Ok(Example { label, input: pipeline.prepare(&cube)? })
        })
        .collect()
}
