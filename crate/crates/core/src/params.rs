//! Named parameter tables shared by the front-end and the classifiers.

use crate::ctensor::{Tape, Value, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq)]
pub struct Param<T> {
    pub name: String,
    pub value: Value<T>,
}

/// Ordered list of named tensors. Order is stable and is the order used by
/// optimizers and checkpoints.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamSet<T> {
    entries: Vec<Param<T>>,
}

impl<T> Default for ParamSet<T> {
    fn default() -> Self {
        Self { entries: Vec::new() }
    }
}

impl<T: Scalar> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, name: impl Into<String>, value: impl Into<Value<T>>) -> usize {
        self.entries.push(Param { name: name.into(), value: value.into() });
        self.entries.len() - 1
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Param<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut Param<T>> {
        self.entries.iter_mut()
    }

    pub fn entry(&self, i: usize) -> &Param<T> {
        &self.entries[i]
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.entries.iter().position(|p| p.name == name)
    }

    pub fn get(&self, name: &str) -> Option<&Value<T>> {
        self.entries.iter().find(|p| p.name == name).map(|p| &p.value)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Value<T>> {
        self.entries.iter_mut().find(|p| p.name == name).map(|p| &mut p.value)
    }

    /// Number of real coordinates (complex entries count twice).
    pub fn coord_count(&self) -> usize {
        self.entries.iter().map(|p| p.value.real_len()).sum()
    }

    /// Registers every entry as a differentiable leaf.
    pub fn register(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.entries.iter().map(|p| tape.param(p.value.clone())).collect()
    }

    /// Registers every entry as a constant leaf.
    pub fn register_frozen(&self, tape: &mut Tape<T>) -> Vec<Var> {
        self.entries.iter().map(|p| tape.constant(p.value.clone())).collect()
    }

    /// Replaces values from `other`, which must list the same names, kinds
    /// and shapes.
    pub fn assign(&mut self, other: &ParamSet<T>) -> Result<()> {
        if other.len() != self.len() {
            return Err(Error::Checkpoint(format!(
                "parameter count {} does not match {}",
                other.len(),
                self.len()
            )));
        }
        for (dst, src) in self.entries.iter_mut().zip(&other.entries) {
            if dst.name != src.name
                || dst.value.shape() != src.value.shape()
                || dst.value.is_complex() != src.value.is_complex()
            {
                return Err(Error::Checkpoint(format!(
                    "parameter '{}' {:?} does not match '{}' {:?}",
                    src.name,
                    src.value.shape(),
                    dst.name,
                    dst.value.shape()
                )));
            }
            dst.value = src.value.clone();
        }
        Ok(())
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|p| p.value.is_finite())
    }
}
