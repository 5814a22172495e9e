#![allow(dead_code)]

pub mod fixtures;
pub mod grads;
pub mod physics;
