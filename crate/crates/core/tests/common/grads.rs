//! Finite-difference checks shared by the gradient tests and the acceptance
//! harness. Each case returns its worst relative error.

use cubelearn::classifier::{self, ClassifierKind, ClassifierSpec, Mode};
use cubelearn::ctensor::{grad_check, grad_check_sampled, ComplexTensor, Tape, Tensor, Value, Var};
use cubelearn::cubelearn::{c_relu, mod_relu, prepare_input, z_relu, CubeLearn, CubeLearnConfig};
use cubelearn::dft_oracle::SlicingKind;
use cubelearn::radar_sim::RawDataCube;
use cubelearn::rng;
use cubelearn::Result;
use rand::Rng;

pub const EPS: f64 = 1e-6;

pub fn rand_real(shape: &[usize], seed: u64) -> Tensor<f64> {
    let mut r = rng::stream(seed, "grads/real", 0);
    let n = shape.iter().product();
    Tensor::from_vec(shape, (0..n).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap()
}

pub fn rand_complex(shape: &[usize], seed: u64) -> ComplexTensor<f64> {
    let mut r = rng::stream(seed, "grads/complex", 0);
    let n: usize = shape.iter().product();
    let re = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    let im = (0..n).map(|_| r.gen_range(-1.0..1.0)).collect();
    ComplexTensor::from_parts(shape, re, im).unwrap()
}

/// Scalar `<y, r>` for a fixed random `r`, so every output element matters.
pub fn project(tape: &mut Tape<f64>, y: Var, seed: u64) -> Result<Var> {
    let y = match tape.value(y) {
        Value::Complex(_) => tape.modulus(y)?,
        Value::Real(_) => y,
    };
    let n = tape.value(y).shape().iter().product::<usize>();
    let flat = tape.reshape(y, &[1, n])?;
    let w = tape.constant(rand_real(&[1, n], seed ^ 0x5eed));
    let b = tape.constant(Tensor::zeros(&[1]));
    classifier::dense(tape, flat, w, b)
}

fn check(f: impl Fn(&mut Tape<f64>, &[Var]) -> Result<Var>, params: Vec<Value<f64>>) -> f64 {
    grad_check(f, &params, EPS).unwrap()
}

pub fn cmatmul() -> f64 {
    check(
        |t, v| {
            let y = t.cmatmul(v[0], v[1])?;
            project(t, y, 1)
        },
        vec![rand_complex(&[3, 4], 1).into(), rand_complex(&[4, 2], 2).into()],
    )
}

pub fn apply_along_axis() -> f64 {
    (0..3)
        .map(|axis| {
            check(
                |t, v| {
                    let y = t.apply_along_axis(v[0], v[1], axis)?;
                    project(t, y, 2)
                },
                vec![rand_complex(&[3, 4, 2], 3).into(), rand_complex(&[5, [3, 4, 2][axis]], 4).into()],
            )
        })
        .fold(0.0, f64::max)
}

pub fn modulus() -> f64 {
    check(
        |t, v| {
            let y = t.modulus(v[0])?;
            project(t, y, 3)
        },
        vec![rand_complex(&[4, 3], 5).into()],
    )
}

pub fn log_eps() -> f64 {
    let x = rand_real(&[6], 6).map(|v| v.abs() + 0.1);
    check(
        |t, v| {
            let y = t.log_eps(v[0], 1e-6)?;
            project(t, y, 4)
        },
        vec![x.into()],
    )
}

pub fn sum_axis() -> f64 {
    let real = check(
        |t, v| {
            let y = t.sum_axis(v[0], 1)?;
            project(t, y, 5)
        },
        vec![rand_real(&[2, 3, 4], 7).into()],
    );
    let complex = check(
        |t, v| {
            let y = t.sum_axis(v[0], 2)?;
            project(t, y, 6)
        },
        vec![rand_complex(&[2, 3, 4], 8).into()],
    );
    real.max(complex)
}

pub fn elementwise() -> f64 {
    let real = check(
        |t, v| {
            let s = t.add(v[0], v[1])?;
            let s = t.scale(s, -1.7)?;
            let s = t.relu(s)?;
            let s = t.reshape(s, &[3, 2])?;
            let y = project(t, s, 7)?;
            t.sum_all(y)
        },
        vec![rand_real(&[6], 9).into(), rand_real(&[6], 10).into()],
    );
    let complex = check(
        |t, v| {
            let s = t.add(v[0], v[1])?;
            let s = t.scale(s, 0.3)?;
            project(t, s, 8)
        },
        vec![rand_complex(&[5], 11).into(), rand_complex(&[5], 12).into()],
    );
    real.max(complex)
}

pub fn activations() -> f64 {
    let m = check(
        |t, v| {
            let y = mod_relu(t, v[0], v[1], 1)?;
            project(t, y, 9)
        },
        vec![rand_complex(&[2, 3], 13).into(), Tensor::from_vec(&[3], vec![-0.3, 0.2, -0.1]).unwrap().into()],
    );
    let c = check(
        |t, v| {
            let y = c_relu(t, v[0])?;
            project(t, y, 10)
        },
        vec![rand_complex(&[7], 14).into()],
    );
    let z = check(
        |t, v| {
            let y = z_relu(t, v[0])?;
            project(t, y, 11)
        },
        vec![rand_complex(&[7], 15).into()],
    );
    m.max(c).max(z)
}

/// 2-D and 3-D convolutions plus one input large enough to span several
/// unfolding tiles (checked on sampled coordinates).
pub fn conv() -> f64 {
    let conv_case = |x: &[usize], k: [usize; 3], seed: u64, sampled: bool| {
        let w_shape = [2, x[1], k[0], k[1], k[2]];
        let params: Vec<Value<f64>> =
            vec![rand_real(x, seed).into(), rand_real(&w_shape, seed + 1).into(), rand_real(&[2], seed + 2).into()];
        let f = |t: &mut Tape<f64>, v: &[Var]| {
            let y = classifier::conv(t, v[0], v[1], v[2])?;
            project(t, y, seed)
        };
        if sampled {
            grad_check_sampled(f, &params, EPS, 24, seed).unwrap()
        } else {
            grad_check(f, &params, EPS).unwrap()
        }
    };
    let a = conv_case(&[2, 2, 1, 4, 5], [1, 3, 3], 20, false);
    let b = conv_case(&[1, 2, 3, 4, 3], [3, 3, 3], 30, false);
    let c = conv_case(&[1, 3, 5, 40, 40], [3, 3, 3], 40, true);
    a.max(b).max(c)
}

pub fn batch_norm() -> f64 {
    check(
        |t, v| {
            let (y, _) = classifier::batch_norm(t, v[0], v[1], v[2], None)?;
            project(t, y, 12)
        },
        vec![
            rand_real(&[3, 2, 1, 2, 2], 50).into(),
            rand_real(&[2], 51).map(|v| v + 1.5).into(),
            rand_real(&[2], 52).into(),
        ],
    )
}

pub fn max_pool() -> f64 {
    check(
        |t, v| {
            let y = classifier::max_pool(t, v[0], [1, 2, 2])?;
            project(t, y, 13)
        },
        vec![rand_real(&[2, 2, 1, 5, 4], 60).into()],
    )
}

pub fn dense() -> f64 {
    check(
        |t, v| {
            let y = classifier::dense(t, v[0], v[1], v[2])?;
            project(t, y, 14)
        },
        vec![rand_real(&[3, 5], 70).into(), rand_real(&[4, 5], 71).into(), rand_real(&[4], 72).into()],
    )
}

/// Three steps, hidden size 4.
pub fn lstm() -> f64 {
    check(
        |t, v| {
            let y = classifier::lstm(t, v[0], v[1], v[2], v[3])?;
            project(t, y, 15)
        },
        vec![
            rand_real(&[2, 3, 5], 80).into(),
            rand_real(&[16, 5], 81).into(),
            rand_real(&[16, 4], 82).into(),
            rand_real(&[16], 83).into(),
        ],
    )
}

pub fn cross_entropy() -> f64 {
    check(
        |t, v| classifier::cross_entropy(t, v[0], &[2, 0, 5]),
        vec![rand_real(&[3, 6], 90).map(|v| 3.0 * v).into()],
    )
}

fn small_cube(dims: [usize; 4], seed: u64) -> RawDataCube<f64> {
    RawDataCube::new(rand_complex(&dims, seed), 0).unwrap()
}

/// The learnable front-end for every slicing kind, with a ModReLU between
/// layers and the log after the modulus.
pub fn frontend() -> f64 {
    let dims = [2, 2, 4, 4];
    let mut worst: f64 = 0.0;
    for (i, kind) in SlicingKind::ALL.into_iter().enumerate() {
        let cfg = CubeLearnConfig {
            angle_out: 4,
            activation_between: cubelearn::cubelearn::Activation::ModRelu,
            log_after_modulus: true,
            ..CubeLearnConfig::for_kind(kind)
        };
        let module = CubeLearn::<f64>::new(cfg, dims, i as u64).unwrap();
        let input = prepare_input(&small_cube(dims, 100 + i as u64), kind).unwrap();
        let params: Vec<Value<f64>> = module.params().iter().map(|p| p.value.clone()).collect();
        let err = check(
            |t, v| {
                let x = t.constant(input.clone());
                let y = module.forward(t, x, v)?;
                project(t, y, 16)
            },
            params,
        );
        worst = worst.max(err);
    }
    worst
}

/// Learnable D-T front-end feeding a small CNN2D, one-sample batch,
/// cross-entropy loss; every coordinate of both models is perturbed.
pub fn end_to_end_dt() -> f64 {
    let dims = [4, 2, 8, 8];
    let module = CubeLearn::<f64>::new(CubeLearnConfig::for_kind(SlicingKind::DT), dims, 3).unwrap();
    let mut spec = ClassifierSpec::new(ClassifierKind::Cnn2d, 3);
    spec.conv_channels = vec![2, 2, 2];
    spec.fc_sizes = vec![6, 3];
    let heat_shape = module.output_shape();
    let model = classifier::Classifier::<f64>::new(spec, &heat_shape, 4).unwrap();
    let input = prepare_input(&small_cube(dims, 200), SlicingKind::DT).unwrap();
    let n_front = module.params().len();
    let params: Vec<Value<f64>> =
        module.params().iter().chain(model.params().iter()).map(|p| p.value.clone()).collect();
    let mut batch = vec![1];
    batch.extend_from_slice(&heat_shape);
    check(
        |t, v| {
            let x = t.constant(input.clone());
            let h = module.forward(t, x, &v[..n_front])?;
            let h = t.reshape(h, &batch)?;
            let (logits, _) = model.forward(t, h, &v[n_front..], Mode::Train)?;
            classifier::cross_entropy(t, logits, &[1])
        },
        params,
    )
}
