//! Central finite-difference verification of tape gradients.

use super::tape::{Tape, Value, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;
use rand::seq::index::sample;

/// Builds a scalar loss on a fresh tape from the given parameter leaves.
pub trait LossFn<T: Scalar>: Fn(&mut Tape<T>, &[Var]) -> Result<Var> {}
impl<T: Scalar, F: Fn(&mut Tape<T>, &[Var]) -> Result<Var>> LossFn<T> for F {}

fn evaluate<T: Scalar>(f: &impl LossFn<T>, params: &[Value<T>]) -> Result<(Tape<T>, Vec<Var>, Var, T)> {
    let mut tape = Tape::new();
    let vars: Vec<Var> = params.iter().map(|p| tape.param(p.clone())).collect();
    let loss = f(&mut tape, &vars)?;
    let t = tape.real(loss)?;
    if t.len() != 1 {
        return Err(Error::Shape(format!("loss must be scalar, got {:?}", t.shape())));
    }
    let v = t.data()[0];
    if !v.is_finite() {
        return Err(Error::Evaluation(format!("loss evaluated to {v}")));
    }
    Ok((tape, vars, loss, v))
}

/// Maximum over coordinates of `|analytic - numeric| / max(1, |numeric|)`,
/// where complex parameters contribute their real and imaginary parts as
/// separate coordinates.
pub fn grad_check<T: Scalar>(f: impl LossFn<T>, params: &[Value<T>], eps: T) -> Result<T> {
    let coords: Vec<(usize, usize)> = params
        .iter()
        .enumerate()
        .flat_map(|(p, v)| (0..v.real_len()).map(move |i| (p, i)))
        .collect();
    check_coords(&f, params, eps, &coords)
}

/// As [`grad_check`] but on at most `per_param` randomly chosen coordinates of
/// each parameter, for models too large to perturb exhaustively.
pub fn grad_check_sampled<T: Scalar>(
    f: impl LossFn<T>,
    params: &[Value<T>],
    eps: T,
    per_param: usize,
    seed: u64,
) -> Result<T> {
    let mut rng = crate::rng::stream(seed, "grad_check", 0);
    let mut coords = Vec::new();
    for (p, v) in params.iter().enumerate() {
        let n = v.real_len();
        if n <= per_param {
            coords.extend((0..n).map(|i| (p, i)));
        } else {
            coords.extend(sample(&mut rng, n, per_param).into_iter().map(|i| (p, i)));
        }
    }
    check_coords(&f, params, eps, &coords)
}

fn check_coords<T: Scalar>(
    f: &impl LossFn<T>,
    params: &[Value<T>],
    eps: T,
    coords: &[(usize, usize)],
) -> Result<T> {
    if !(eps > T::zero()) {
        return Err(Error::Parameter(format!("finite-difference step must be positive, got {eps}")));
    }
    let (tape, vars, loss, _) = evaluate(f, params)?;
    let grads = tape.backward(loss)?;
    drop(tape);
    let two = T::one() + T::one();
    let mut worst = T::zero();
    let mut work: Vec<Value<T>> = params.to_vec();
    for &(p, i) in coords {
        let analytic = grads.get(vars[p]).map_or(T::zero(), |g| g.coord(i));
        let orig = work[p].coord(i);
        *work[p].coord_mut(i) = orig + eps;
        let plus = evaluate(f, &work)?.3;
        *work[p].coord_mut(i) = orig - eps;
        let minus = evaluate(f, &work)?.3;
        *work[p].coord_mut(i) = orig;
        let numeric = (plus - minus) / (two * eps);
        let err = (analytic - numeric).abs() / numeric.abs().max(T::one());
        if err > worst || err.is_nan() {
            worst = err;
        }
    }
    Ok(worst)
}
