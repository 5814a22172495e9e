//! On-disk formats.

pub mod checkpoint;
pub mod cube_file;
pub mod features;
