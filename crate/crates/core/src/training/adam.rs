use serde::{Deserialize, Serialize};

use crate::ctensor::Value;
use crate::error::{Error, Result};
use crate::params::ParamSet;
use crate::scalar::{lit, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self { beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }
}

/// Moment estimates for one parameter set, one flat buffer per tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState<T> {
    pub step: u64,
    m: Vec<Vec<T>>,
    v: Vec<Vec<T>>,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamSet<T>) -> Self {
        let zeros = || params.iter().map(|p| vec![T::zero(); p.value.real_len()]).collect();
        Self { step: 0, m: zeros(), v: zeros() }
    }
}

/// One bias-corrected Adam update. `grads[i]` belongs to parameter `i`;
/// `None` means a zero gradient. Complex tensors are updated as their two
/// real coordinate planes.
pub fn adam_step<T: Scalar>(
    params: &mut ParamSet<T>,
    grads: &[Option<Value<T>>],
    state: &mut AdamState<T>,
    lr: f64,
    cfg: &AdamConfig,
) -> Result<()> {
    if grads.len() != params.len() || state.m.len() != params.len() {
        return Err(Error::Parameter(format!(
            "{} gradients and {} moment buffers for {} parameters",
            grads.len(),
            state.m.len(),
            params.len()
        )));
    }
    for (p, g) in params.iter().zip(grads) {
        if let Some(g) = g {
            if g.shape() != p.value.shape() || g.is_complex() != p.value.is_complex() {
                return Err(Error::Dimension {
                    op: "adam gradient",
                    left: g.shape().to_vec(),
                    right: p.value.shape().to_vec(),
                });
            }
            if !g.is_finite() {
                return Err(Error::Training(format!("non-finite gradient for '{}' at step {}", p.name, state.step + 1)));
            }
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let (b1, b2): (T, T) = (lit(cfg.beta1), lit(cfg.beta2));
    let eps: T = lit(cfg.eps);
    let lr_t: T = lit(lr);
    let c1 = T::one() - b1.powi(t);
    let c2 = T::one() - b2.powi(t);
    let (one_b1, one_b2) = (T::one() - b1, T::one() - b2);
    for (i, (p, g)) in params.iter_mut().zip(grads).enumerate() {
        let (m, v) = (&mut state.m[i], &mut state.v[i]);
        let gp = g.as_ref().map(|g| g.planes());
        let mut offset = 0;
        let plane_lens: Vec<usize> = p.value.planes().iter().map(|pl| pl.len()).collect();
        let mut values = if lr == 0.0 { Vec::new() } else { p.value.planes_mut() };
        for (k, &len) in plane_lens.iter().enumerate() {
            let ms = &mut m[offset..offset + len];
            let vs = &mut v[offset..offset + len];
            match &gp {
                Some(gp) => {
                    for ((mj, vj), &gj) in ms.iter_mut().zip(vs.iter_mut()).zip(gp[k]) {
                        *mj = b1 * *mj + one_b1 * gj;
                        *vj = b2 * *vj + one_b2 * gj * gj;
                    }
                }
                None => {
                    for (mj, vj) in ms.iter_mut().zip(vs.iter_mut()) {
                        *mj = b1 * *mj;
                        *vj = b2 * *vj;
                    }
                }
            }
            if let Some(xs) = values.get_mut(k) {
                for ((x, &mj), &vj) in xs.iter_mut().zip(ms.iter()).zip(vs.iter()) {
                    *x -= lr_t * (mj / c1) / ((vj / c2).sqrt() + eps);
                }
            }
            offset += len;
        }
    }
    Ok(())
}
