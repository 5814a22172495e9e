//! Learnable complex-linear pre-processing for FMCW radar, with the classical
//! DFT chain it replaces, a synthetic data generator and a small training
//! stack.
//!
//! Everything numeric is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the default `f64` instantiation.

pub mod bench;
pub mod classifier;
pub mod cli;
pub mod ctensor;
pub mod cubelearn;
pub mod dft_oracle;
pub mod error;
pub mod io;
pub mod params;
pub mod radar_sim;
pub mod rng;
pub mod scalar;
pub mod training;

pub use error::{Error, Result};

pub type ComplexTensor = ctensor::ComplexTensor<f64>;
pub type Tensor = ctensor::Tensor<f64>;
pub type RawDataCube = radar_sim::RawDataCube<f64>;
pub type CubeLearn = cubelearn::CubeLearn<f64>;
