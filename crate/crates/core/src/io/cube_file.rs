//! `RDC1` raw cube files.
//!
//! Layout (all little-endian):
//!
//! ```text
//! offset  size  field
//! 0       4     magic "RDC1"
//! 4       4     version (u32, = 1)
//! 8       16    n_frames, n_antennas, n_chirps, n_samples (u32 each)
//! 24      4     label (i32)
//! 28      ...   payload: (re, im) f32 pairs, frame -> antenna -> chirp -> sample
//! ```

use std::path::Path;

use crate::ctensor::ComplexTensor;
use crate::error::{Error, Result};
use crate::radar_sim::RawDataCube;
use crate::scalar::Scalar;

pub const MAGIC: &[u8; 4] = b"RDC1";
pub const VERSION: u32 = 1;
pub const HEADER_LEN: usize = 28;

pub fn encode_cube<T: Scalar>(cube: &RawDataCube<T>) -> Vec<u8> {
    let n = cube.data.len();
    let mut out = Vec::with_capacity(HEADER_LEN + 8 * n);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    for d in cube.shape() {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    out.extend_from_slice(&cube.label.to_le_bytes());
    for (&r, &i) in cube.data.re().iter().zip(cube.data.im()) {
        out.extend_from_slice(&r.to_f32_lossy().to_le_bytes());
        out.extend_from_slice(&i.to_f32_lossy().to_le_bytes());
    }
    out
}

fn u32_at(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(bytes[off..off + 4].try_into().expect("4 bytes"))
}

pub fn decode_cube<T: Scalar>(bytes: &[u8], path: &Path) -> Result<RawDataCube<T>> {
    let bad = |reason: String| Error::Format { path: path.to_path_buf(), reason };
    if bytes.len() < HEADER_LEN {
        return Err(bad(format!("{} bytes is shorter than the header", bytes.len())));
    }
    if &bytes[..4] != MAGIC {
        return Err(bad(format!("bad magic {:?}", &bytes[..4])));
    }
    let version = u32_at(bytes, 4);
    if version != VERSION {
        return Err(bad(format!("unsupported version {version}")));
    }
    let dims: Vec<usize> = (0..4).map(|i| u32_at(bytes, 8 + 4 * i) as usize).collect();
    let label = i32::from_le_bytes(bytes[24..28].try_into().expect("4 bytes"));
    let n: usize = dims.iter().product();
    let expected = HEADER_LEN + 8 * n;
    if bytes.len() != expected {
        return Err(bad(format!("payload is {} bytes, expected {}", bytes.len() - HEADER_LEN, 8 * n)));
    }
    let mut re = Vec::with_capacity(n);
    let mut im = Vec::with_capacity(n);
    for pair in bytes[HEADER_LEN..].chunks_exact(8) {
        re.push(T::from_f32_bits(f32::from_le_bytes(pair[..4].try_into().expect("4 bytes"))));
        im.push(T::from_f32_bits(f32::from_le_bytes(pair[4..].try_into().expect("4 bytes"))));
    }
    RawDataCube::new(ComplexTensor::from_parts(&dims, re, im)?, label)
}

pub fn write_cube<T: Scalar>(path: &Path, cube: &RawDataCube<T>) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, encode_cube(cube)).map_err(|e| Error::io(path, e))
}

pub fn read_cube<T: Scalar>(path: &Path) -> Result<RawDataCube<T>> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    decode_cube(&bytes, path)
}
