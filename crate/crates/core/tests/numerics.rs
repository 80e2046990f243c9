use dastgcn::numerics::{finite_diff_check, primitive_suite, Tape, Tensor, DEFAULT_EPS};
use dastgcn::{Error, Result};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], rng: &mut ChaCha8Rng) -> Tensor {
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
}

fn m(rows: &[&[f64]]) -> Tensor {
    Tensor::from_rows(&rows.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap()
}

fn conv_out(x: &[f64], w: &[f64], dilation: usize) -> Result<Vec<f64>> {
    let mut tape = Tape::new();
    let xv = tape.constant(Tensor::new([x.len(), 1], x.to_vec())?);
    let wv = tape.constant(Tensor::new([w.len(), 1, 1], w.to_vec())?);
    let bv = tape.constant(Tensor::zeros([1]));
    let out = tape.conv1d(xv, wv, bv, dilation)?;
    Ok(tape.value(out).data().to_vec())
}

#[test]
fn matmul_identity_and_annihilator() {
    let mut tape = Tape::new();
    let a = tape.constant(m(&[&[1.0, 2.0], &[3.0, 4.0]]));
    let i = tape.constant(Tensor::eye(2));
    let z = tape.constant(Tensor::zeros([2, 2]));
    let ia = tape.matmul(i, a).unwrap();
    let az = tape.matmul(a, z).unwrap();
    assert_eq!(tape.value(ia).data(), &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(tape.value(az).data(), &[0.0; 4]);
}

#[test]
fn matmul_shape_mismatch_names_both_shapes() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros([2, 3]));
    let b = tape.constant(Tensor::zeros([2, 3]));
    let err = tape.matmul(a, b).unwrap_err();
    let msg = err.to_string();
    assert!(matches!(err, Error::Dimension(_)));
    assert!(msg.contains("[2, 3]"), "{msg}");
}

#[test]
fn matmul_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let a = random(&[3, 3], &mut rng);
    let b = random(&[3, 3], &mut rng);
    let report = finite_diff_check(
        |t, v| {
            let p = t.matmul(v[0], v[1])?;
            Ok(t.sum(p))
        },
        &[a, b],
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn conv_identity_kernels() {
    let x = [0.3, -1.0, 2.0, 0.5, 4.0];
    for dilation in 1..4 {
        assert_eq!(conv_out(&x, &[1.0], dilation).unwrap(), x);
        assert_eq!(conv_out(&x, &[0.0, 1.0, 0.0], dilation).unwrap(), x);
    }
}

#[test]
fn conv_difference_kernel_with_zero_padding() {
    let out = conv_out(&[0.0, 1.0, 2.0, 3.0], &[-1.0, 0.0, 1.0], 1).unwrap();
    assert_eq!(out, vec![1.0, 2.0, 2.0, -2.0]);
}

#[test]
fn conv_dilation_reads_spread_taps() {
    // y[t] = x[t+2] - x[t-2]
    let out = conv_out(&[1.0, 2.0, 3.0, 4.0, 5.0], &[-1.0, 0.0, 1.0], 2).unwrap();
    assert_eq!(out, vec![3.0, 4.0, 4.0, -2.0, -3.0]);
}

#[test]
fn conv_rejects_bad_configuration() {
    assert!(matches!(conv_out(&[1.0, 2.0], &[1.0, 1.0], 1), Err(Error::Config(_))));
    assert!(matches!(conv_out(&[1.0, 2.0], &[1.0], 0), Err(Error::Config(_))));
}

#[test]
fn activation_fixed_points() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::vector(vec![-1.0, 2.0]));
    let r = tape.relu(x);
    assert_eq!(tape.value(r).data(), &[0.0, 2.0]);
    let z = tape.constant(Tensor::scalar(0.0));
    let s = tape.sigmoid(z);
    let th = tape.tanh(z);
    assert_eq!(tape.value(s).item(), 0.5);
    assert_eq!(tape.value(th).item(), 0.0);
    let zz = tape.constant(Tensor::zeros([5, 5]));
    let sm = tape.softmax_rows(zz).unwrap();
    assert!(tape.value(sm).data().iter().all(|&v| (v - 0.2).abs() < 1e-15));
}

#[test]
fn backward_of_sum_of_squares() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![1.0, -2.0, 3.0]));
    let sq = tape.mul(x, x).unwrap();
    let loss = tape.sum(sq);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[2.0, -4.0, 6.0]);
}

#[test]
fn backward_accumulates_fan_out() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![0.5, 1.5]));
    let y = tape.add(x, x).unwrap();
    let loss = tape.sum(y);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[2.0, 2.0]);
}

#[test]
fn backward_requires_scalar_loss() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![0.5, 1.5]));
    assert!(matches!(tape.backward(x), Err(Error::Contract(_))));
}

#[test]
fn untouched_tracked_leaf_gets_zero_gradient() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::vector(vec![0.5, 1.5]));
    let unused = tape.param(Tensor::zeros([3]));
    let loss = tape.sum(x);
    let g = tape.backward(loss).unwrap();
    assert_eq!(g.get(unused).unwrap().data(), &[0.0; 3]);
}

#[test]
fn sigmoid_of_matvec_gradient() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let w = random(&[4, 4], &mut rng);
    let x = random(&[4, 1], &mut rng);
    let report = finite_diff_check(
        |t, v| {
            let y = t.matmul(v[0], v[1])?;
            let s = t.sigmoid(y);
            Ok(t.sum(s))
        },
        &[w, x],
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(report.max_rel_error < 1e-6, "{report:?}");
}

#[test]
fn gradcheck_identity_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = random(&[6], &mut rng);
    let report = finite_diff_check(|t, v| Ok(t.sum(v[0])), &[x], DEFAULT_EPS).unwrap();
    assert!(report.max_rel_error < 1e-9, "{report:?}");
    assert_eq!(report.coordinates, 6);
}

#[test]
fn gradcheck_detects_a_wrong_rule() {
    // exp() with a deliberately halved derivative.
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let x = random(&[5], &mut rng);
    let report = finite_diff_check(
        |t, v| {
            let value = t.value(v[0]).map(f64::exp);
            let y = t.custom(&[v[0]], value, |g, _, out| {
                let d = g.data().iter().zip(out.data()).map(|(g, y)| 0.5 * g * y).collect();
                vec![Tensor::new(out.shape(), d).unwrap()]
            });
            Ok(t.sum(y))
        },
        &[x],
        DEFAULT_EPS,
    )
    .unwrap();
    assert!(report.max_rel_error > 1e-2, "{report:?}");
}

#[test]
fn gradcheck_rejects_non_finite_values() {
    let x = Tensor::vector(vec![1.0]);
    let res = finite_diff_check(|t, v| Ok(t.scale(v[0], f64::INFINITY)), &[x], DEFAULT_EPS);
    assert!(matches!(res, Err(Error::GradCheck(_))));
}

#[test]
fn every_primitive_passes_gradcheck() {
    let reports = primitive_suite(5).unwrap();
    assert!(reports.len() >= 15);
    for (name, report) in reports {
        assert!(report.max_rel_error < 1e-6, "{name}: {report:?}");
    }
}

#[test]
fn forward_is_deterministic() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let x = random(&[4, 16, 3], &mut rng);
    let w = random(&[3, 3, 3], &mut rng);
    let run = || {
        let mut t = Tape::new();
        let (xv, wv, bv) = (t.constant(x.clone()), t.constant(w.clone()), t.constant(Tensor::zeros([3])));
        let y = t.conv1d(xv, wv, bv, 2).unwrap();
        t.value(y).clone()
    };
    assert_eq!(run().data(), run().data());
}

proptest! {
    #[test]
    fn softmax_rows_are_positive_and_normalised(
        rows in 1usize..6,
        vals in prop::collection::vec(-30.0f64..30.0, 36),
    ) {
        let data = vals[..rows * 6].to_vec();
        let mut tape = Tape::new();
        let x = tape.constant(Tensor::new([rows, 6], data).unwrap());
        let s = tape.softmax_rows(x).unwrap();
        for r in 0..rows {
            let row = tape.value(s).row(r);
            prop_assert!(row.iter().all(|&v| v > 0.0));
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn identity_kernel_is_identity_for_any_dilation(
        x in prop::collection::vec(-10.0f64..10.0, 1..40),
        dilation in 1usize..9,
    ) {
        prop_assert_eq!(conv_out(&x, &[0.0, 1.0, 0.0], dilation).unwrap(), x.clone());
        prop_assert_eq!(conv_out(&x, &[0.0, 0.0, 1.0, 0.0, 0.0], dilation).unwrap(), x);
    }
}
