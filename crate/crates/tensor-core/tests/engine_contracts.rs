//! Anchor cases and engine-level contracts: identity kernels, symmetric
//! softmax, the GRU hand oracle, tape replay rules, NaN policy, determinism.

use proptest::prelude::*;
use tensor_core::ops::{Axis, GruParams};
use tensor_core::{grad_check, Graph, RngStream, Tensor, TensorError};

#[test]
fn conv_with_identity_kernel_is_identity() {
    // 1x1 kernel that maps each channel to itself, zero bias.
    let g = Graph::<f64>::new();
    let (h, w, c) = (5, 4, 3);
    let mut rng = RngStream::seed(1);
    let data: Vec<f64> = (0..h * w * c).map(|_| rng.normal()).collect();
    let x = Tensor::from_vec(data.clone(), &[h * w, c]).unwrap();
    let mut eye = vec![0.0; c * c];
    for i in 0..c {
        eye[i * c + i] = 1.0;
    }
    let kernel = Tensor::from_vec(eye, &[c, c]).unwrap();
    let bias = Tensor::from_vec(vec![0.0; c], &[c]).unwrap();
    let y = g.conv2d(&x, 1, h, w, &kernel, 1, 1, &bias, 1, 0).unwrap();
    assert_eq!(y.to_vec(), data);
}

#[test]
fn softmax_of_equal_logits_is_uniform() {
    let g = Graph::<f64>::new();
    let x = Tensor::from_vec(vec![0.0, 0.0, 0.0], &[1, 3]).unwrap();
    let y = g.softmax(&x, Axis::Cols).unwrap();
    for v in y.to_vec() {
        assert!((v - 1.0 / 3.0).abs() < 1e-15);
    }
}

/// Scalar transcription of the GRU equations, used as an independent oracle.
fn gru_scalar_oracle(
    x: &[f64],
    h: &[f64],
    d_in: usize,
    d_h: usize,
    w: impl Fn(&str, usize, usize) -> f64,
    b: impl Fn(&str, usize) -> f64,
) -> Vec<f64> {
    let sigma = |v: f64| 1.0 / (1.0 + (-v).exp());
    let mut out = vec![0.0; d_h];
    for j in 0..d_h {
        let mut xr = b("ir", j);
        let mut xz = b("iz", j);
        let mut xn = b("in", j);
        for i in 0..d_in {
            xr += x[i] * w("ir", i, j);
            xz += x[i] * w("iz", i, j);
            xn += x[i] * w("in", i, j);
        }
        let mut hr = b("hr", j);
        let mut hz = b("hz", j);
        let mut hn = b("hn", j);
        for i in 0..d_h {
            hr += h[i] * w("hr", i, j);
            hz += h[i] * w("hz", i, j);
            hn += h[i] * w("hn", i, j);
        }
        let r = sigma(xr + hr);
        let z = sigma(xz + hz);
        let n = (xn + r * hn).tanh();
        out[j] = (1.0 - z) * n + z * h[j];
    }
    out
}

#[test]
fn gru_with_zero_weights_halves_the_state() {
    // All-zero gates: update gate sigma(0) = 0.5, candidate tanh(0) = 0,
    // so h' = 0.5 * h. Cross-checked against the scalar oracle.
    let (d_in, d_h) = (3, 4);
    let g = Graph::<f64>::new();
    let mut rng = RngStream::seed(2);
    let p = GruParams::<f64>::init(d_in, d_h, &mut rng);
    for t in [&p.w_ir, &p.w_iz, &p.w_in, &p.w_hr, &p.w_hz, &p.w_hn] {
        t.set_data(&vec![0.0; t.len()]);
    }
    let xv: Vec<f64> = (0..d_in).map(|_| rng.normal()).collect();
    let hv: Vec<f64> = (0..d_h).map(|_| rng.normal()).collect();
    let x = Tensor::from_vec(xv.clone(), &[1, d_in]).unwrap();
    let h = Tensor::from_vec(hv.clone(), &[1, d_h]).unwrap();
    let out = g.gru_cell(&x, &h, &p).unwrap().to_vec();
    for (o, hi) in out.iter().zip(&hv) {
        assert!((o - 0.5 * hi).abs() < 1e-15, "expected h/2, got {o} vs {hi}");
    }
    let oracle = gru_scalar_oracle(&xv, &hv, d_in, d_h, |_, _, _| 0.0, |_, _| 0.0);
    for (o, e) in out.iter().zip(&oracle) {
        assert!((o - e).abs() < 1e-15);
    }
}

#[test]
fn gru_matches_scalar_oracle_on_random_weights() {
    let (d_in, d_h) = (3, 5);
    let mut rng = RngStream::seed(3);
    let g = Graph::<f64>::new();
    let p = GruParams::<f64>::init(d_in, d_h, &mut rng);
    let xv: Vec<f64> = (0..d_in).map(|_| rng.normal()).collect();
    let hv: Vec<f64> = (0..d_h).map(|_| rng.normal()).collect();
    let x = Tensor::from_vec(xv.clone(), &[1, d_in]).unwrap();
    let h = Tensor::from_vec(hv.clone(), &[1, d_h]).unwrap();
    let out = g.gru_cell(&x, &h, &p).unwrap().to_vec();

    let wmat = |name: &str| -> Vec<f64> {
        match name {
            "ir" => p.w_ir.to_vec(),
            "iz" => p.w_iz.to_vec(),
            "in" => p.w_in.to_vec(),
            "hr" => p.w_hr.to_vec(),
            "hz" => p.w_hz.to_vec(),
            "hn" => p.w_hn.to_vec(),
            _ => unreachable!(),
        }
    };
    let bvec = |name: &str| -> Vec<f64> {
        match name {
            "ir" => p.b_ir.to_vec(),
            "iz" => p.b_iz.to_vec(),
            "in" => p.b_in.to_vec(),
            "hr" => p.b_hr.to_vec(),
            "hz" => p.b_hz.to_vec(),
            "hn" => p.b_hn.to_vec(),
            _ => unreachable!(),
        }
    };
    let oracle = gru_scalar_oracle(
        &xv,
        &hv,
        d_in,
        d_h,
        |n, i, j| wmat(n)[i * d_h + j],
        |n, j| bvec(n)[j],
    );
    for (o, e) in out.iter().zip(&oracle) {
        assert!((o - e).abs() < 1e-12, "{o} vs oracle {e}");
    }
}

#[test]
fn grad_check_sum_of_squares_anchor() {
    // f(x) = sum(x^2) at [1, 2]: gradient must be [2, 4] to 1e-8.
    let g = Graph::<f64>::new();
    let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    let y = g.sum_all(&g.mul(&x, &x).unwrap()).unwrap();
    g.backward(&y).unwrap();
    let grad = x.grad().unwrap();
    assert!((grad[0] - 2.0).abs() < 1e-12 && (grad[1] - 4.0).abs() < 1e-12);
    let err = grad_check(
        |g, x| g.sum_all(&g.mul(x, x)?),
        &[1.0, 2.0],
        &[2],
        1e-6,
    )
    .unwrap();
    assert!(err < 1e-8, "rel err {err}");
}

#[test]
fn nll_of_softmax_gradient_anchor() {
    // Cross-entropy of softmax at logits [0,0,0], target class 0:
    // d/dlogits = softmax - onehot = [-2/3, 1/3, 1/3].
    let g = Graph::<f64>::new();
    let x = Tensor::param(vec![0.0, 0.0, 0.0], &[1, 3]).unwrap();
    let p = g.softmax(&x, Axis::Cols).unwrap();
    let p0 = g.slice_cols(&p, 0, 1).unwrap();
    let nll = g.scale(&g.log(&p0).unwrap(), -1.0).unwrap();
    g.backward(&nll).unwrap();
    let grad = x.grad().unwrap();
    let expect = [-2.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0];
    for (gv, e) in grad.iter().zip(expect) {
        assert!((gv - e).abs() < 1e-12, "grad {gv} vs {e}");
    }
}

#[test]
fn backward_twice_is_an_error_not_silent_accumulation() {
    let g = Graph::<f64>::new();
    let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    let y = g.sum_all(&g.mul(&x, &x).unwrap()).unwrap();
    g.backward(&y).unwrap();
    let err = g.backward(&y).unwrap_err();
    assert!(matches!(err, TensorError::TapeConsumed));
    // Recording new ops on a consumed graph is also refused.
    let err = g.mul(&x, &x).unwrap_err();
    assert!(matches!(err, TensorError::TapeConsumed));
}

#[test]
fn backward_requires_scalar_loss() {
    let g = Graph::<f64>::new();
    let x = Tensor::param(vec![1.0, 2.0], &[2]).unwrap();
    let y = g.mul(&x, &x).unwrap();
    let err = g.backward(&y).unwrap_err();
    assert!(matches!(err, TensorError::NonScalarLoss { .. }));
}

#[test]
fn shape_mismatch_names_op_and_both_shapes() {
    let g = Graph::<f64>::new();
    let a = Tensor::from_vec(vec![1.0; 6], &[2, 3]).unwrap();
    let b = Tensor::from_vec(vec![1.0; 6], &[3, 2]).unwrap();
    let msg = g.add(&a, &b).unwrap_err().to_string();
    assert!(msg.contains("add") && msg.contains("[2, 3]") && msg.contains("[3, 2]"), "{msg}");
    let msg = g.matmul(&a, &a).unwrap_err().to_string();
    assert!(msg.contains("matmul") && msg.contains("[2, 3]"), "{msg}");
}

#[test]
fn nan_propagation_is_an_error() {
    let g = Graph::<f64>::new();
    let x = Tensor::from_vec(vec![-1.0, 2.0], &[2]).unwrap();
    // ln of a negative value is NaN; the op must refuse, not propagate.
    let err = g.log(&x).unwrap_err();
    assert!(matches!(err, TensorError::NonFinite { .. }));
}

#[test]
fn forward_is_deterministic_within_a_build() {
    let mut rng = RngStream::seed(9);
    let data: Vec<f64> = (0..24).map(|_| rng.normal()).collect();
    let kdata: Vec<f64> = (0..36).map(|_| rng.normal()).collect();
    let run = || {
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(data.clone(), &[12, 2]).unwrap();
        let k = Tensor::from_vec(kdata.clone(), &[18, 2]).unwrap();
        let b = Tensor::from_vec(vec![0.1, -0.2], &[2]).unwrap();
        let y = g.conv2d(&x, 1, 4, 3, &k, 3, 3, &b, 1, 1).unwrap();
        let s = g.softmax(&y, Axis::Cols).unwrap();
        s.to_vec()
    };
    let a = run();
    let b = run();
    assert!(a.iter().zip(&b).all(|(x, y)| x.to_bits() == y.to_bits()));
}

proptest! {
    #[test]
    fn softmax_rows_sum_to_one(vals in proptest::collection::vec(-30.0f64..30.0, 3..48)) {
        let n = vals.len() / 3;
        let vals = &vals[..n * 3];
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(vals.to_vec(), &[n, 3]).unwrap();
        let y = g.softmax(&x, Axis::Cols).unwrap();
        for row in y.to_vec().chunks(3) {
            let s: f64 = row.iter().sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn normalize_cols_columns_sum_to_one(vals in proptest::collection::vec(0.01f64..5.0, 4..40)) {
        let k = 2;
        let n = vals.len() / k;
        let vals = &vals[..n * k];
        let g = Graph::<f64>::new();
        let x = Tensor::from_vec(vals.to_vec(), &[n, k]).unwrap();
        let y = g.normalize_cols(&x).unwrap().to_vec();
        for j in 0..k {
            let s: f64 = (0..n).map(|i| y[i * k + j]).sum();
            prop_assert!((s - 1.0).abs() < 1e-9);
        }
    }
}
