mod common;

use common::grads::rand_real;
use cubelearn::classifier::{self, softmax, ClassifierKind, ClassifierSpec, Classifier};
use cubelearn::ctensor::{Tape, Tensor};

/// Direct same-padded cross-correlation over every index.
fn naive_conv(x: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Vec<f64> {
    let [n, cin, d, h, wd] = <[usize; 5]>::try_from(x.shape()).unwrap();
    let [cout, _, kd, kh, kw] = <[usize; 5]>::try_from(w.shape()).unwrap();
    let (pd, ph, pw) = (kd / 2, kh / 2, kw / 2);
    let xi = |s, c, z, y, v| x.data()[(((s * cin + c) * d + z) * h + y) * wd + v];
    let wi = |o, c, a, bb, e| w.data()[(((o * cin + c) * kd + a) * kh + bb) * kw + e];
    let mut out = vec![0.0; n * cout * d * h * wd];
    let mut idx = 0;
    for s in 0..n {
        for o in 0..cout {
            for z in 0..d {
                for y in 0..h {
                    for v in 0..wd {
                        let mut acc = b.data()[o];
                        for c in 0..cin {
                            for a in 0..kd {
                                for bb in 0..kh {
                                    for e in 0..kw {
                                        let (zz, yy, vv) = (z + a, y + bb, v + e);
                                        if zz < pd || yy < ph || vv < pw || zz - pd >= d || yy - ph >= h || vv - pw >= wd {
                                            continue;
                                        }
                                        acc += xi(s, c, zz - pd, yy - ph, vv - pw) * wi(o, c, a, bb, e);
                                    }
                                }
                            }
                        }
                        out[idx] = acc;
                        idx += 1;
                    }
                }
            }
        }
    }
    out
}

fn conv_matches_loops(x_shape: [usize; 5], kernel: [usize; 3], cout: usize, seed: u64) {
    let x = rand_real(&x_shape, seed);
    let w = rand_real(&[cout, x_shape[1], kernel[0], kernel[1], kernel[2]], seed + 1);
    let b = rand_real(&[cout], seed + 2);
    let mut tape = Tape::new();
    let (xv, wv, bv) = (tape.constant(x.clone()), tape.constant(w.clone()), tape.constant(b.clone()));
    let y = classifier::conv(&mut tape, xv, wv, bv).unwrap();
    let got = tape.real(y).unwrap();
    let want = naive_conv(&x, &w, &b);
    let err = got.data().iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
    assert!(err < 1e-10, "{x_shape:?} {kernel:?}: {err:e}");
}

#[test]
fn conv_equals_direct_loops() {
    conv_matches_loops([2, 3, 1, 6, 7], [1, 3, 3], 4, 1);
    conv_matches_loops([1, 2, 4, 5, 3], [3, 3, 3], 3, 2);
    // several unfolding tiles per sample
    conv_matches_loops([2, 3, 5, 40, 40], [3, 3, 3], 4, 3);
    conv_matches_loops([1, 1, 1, 130, 256], [1, 3, 3], 2, 4);
}

#[test]
fn saturated_logits_cost_nothing() {
    let mut logits = vec![0.0f64; 6];
    logits[2] = 1000.0;
    let l = classifier::cross_entropy_rows(&Tensor::from_vec(&[1, 6], logits).unwrap(), &[2]).unwrap();
    assert!(l[0].abs() < 1e-12);
}

#[test]
fn softmax_rows_sum_to_one_and_loss_is_nonnegative() {
    let logits = rand_real(&[5, 6], 9).map(|v| 20.0 * v);
    let p = softmax(&logits).unwrap();
    for row in p.data().chunks(6) {
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }
    let losses = classifier::cross_entropy_rows(&logits, &[0, 1, 2, 3, 4]).unwrap();
    assert!(losses.iter().all(|&l| l >= 0.0));
}

#[test]
fn inference_is_repeatable() {
    for (kind, shape) in [
        (ClassifierKind::Cnn2d, vec![10, 16]),
        (ClassifierKind::Cnn3d, vec![4, 8, 8]),
        (ClassifierKind::Cnn2dLstm, vec![4, 8, 8]),
        (ClassifierKind::Cnn3dLstm, vec![3, 8, 8, 8]),
    ] {
        let mut spec = ClassifierSpec::new(kind, 6);
        spec.lstm_hidden = 8;
        spec.fc_sizes = vec![16, 8, 6];
        let model = Classifier::<f64>::new(spec, &shape, 5).unwrap();
        let mut batch_shape = vec![3];
        batch_shape.extend(&shape);
        let x = rand_real(&batch_shape, 11);
        let a = model.logits(&x).unwrap();
        let b = model.logits(&x).unwrap();
        assert_eq!(a.shape(), &[3, 6]);
        assert_eq!(a, b, "{kind:?}");
    }
}
