//! Central-difference checks of every tape primitive on random inputs.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{finite_diff_check, GradCheckReport, DEFAULT_EPS};
use super::tape::{Tape, Var};
use super::tensor::Tensor;
use crate::error::Result;

type CheckFn = Box<dyn Fn(&mut Tape, &[Var]) -> Result<Var>>;

fn cases() -> Vec<(&'static str, Vec<Vec<usize>>, CheckFn)> {
    vec![
        (
            "matmul",
            vec![vec![3, 3], vec![3, 3]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.matmul(v[0], v[1])?;
                Ok(t.sum(y))
            }),
        ),
        (
            "add",
            vec![vec![3, 2], vec![3, 2]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.add(v[0], v[1])?;
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "elementwise_mul",
            vec![vec![5], vec![5]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.mul(v[0], v[1])?;
                let y = t.tanh(y);
                Ok(t.sum(y))
            }),
        ),
        (
            "scale",
            vec![vec![4]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.scale(v[0], -2.5);
                let y = t.tanh(y);
                Ok(t.sum(y))
            }),
        ),
        (
            "add_bias",
            vec![vec![2, 3, 4], vec![4]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.add_bias(v[0], v[1])?;
                let y = t.sigmoid(y);
                Ok(t.sum(y))
            }),
        ),
        (
            "transpose",
            vec![vec![3, 2], vec![3, 2]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let bt = t.transpose(v[1])?;
                let y = t.matmul(v[0], bt)?;
                let y = t.tanh(y);
                Ok(t.sum(y))
            }),
        ),
        (
            "reshape",
            vec![vec![2, 6]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.reshape(v[0], &[3, 4])?;
                let y = t.softmax_rows(y)?;
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "tanh",
            vec![vec![6]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.tanh(v[0]);
                let y = t.mul(y, v[0])?;
                Ok(t.sum(y))
            }),
        ),
        (
            "sigmoid",
            vec![vec![6]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.sigmoid(v[0]);
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "relu",
            vec![vec![8]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.relu(v[0]);
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "softmax_rows",
            vec![vec![3, 4], vec![3, 4]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let s = t.softmax_rows(v[0])?;
                let y = t.mul(s, v[1])?;
                Ok(t.sum(y))
            }),
        ),
        (
            "conv1d_dilated",
            vec![vec![2, 7, 3], vec![3, 3, 2], vec![2]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.conv1d(v[0], v[1], v[2], 2)?;
                let y = t.tanh(y);
                Ok(t.sum(y))
            }),
        ),
        (
            "channel_mix",
            vec![vec![2, 3, 4], vec![4, 5]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.channel_mix(v[0], v[1])?;
                let y = t.sigmoid(y);
                Ok(t.sum(y))
            }),
        ),
        (
            "node_mix",
            vec![vec![3, 3], vec![2, 3, 4, 2]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.node_mix(v[0], v[1])?;
                let y = t.tanh(y);
                Ok(t.sum(y))
            }),
        ),
        (
            "mean_last",
            vec![vec![3, 5]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let y = t.mean_last(v[0])?;
                let y = t.mul(y, y)?;
                Ok(t.sum(y))
            }),
        ),
        (
            "nll",
            vec![vec![3, 4]],
            Box::new(|t: &mut Tape, v: &[Var]| {
                let p = t.softmax_rows(v[0])?;
                t.nll(p, &[0, 3, 1])
            }),
        ),
    ]
}

/// Runs the check for every primitive; returns `(name, report)` pairs.
pub fn primitive_suite(seed: u64) -> Result<Vec<(&'static str, GradCheckReport)>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    for (name, shapes, f) in cases() {
        // Inputs are kept away from the relu kink.
        let inputs: Vec<Tensor> = shapes
            .iter()
            .map(|s| {
                let n = s.iter().product();
                let data = (0..n)
                    .map(|_| {
                        let v: f64 = rng.random_range(-1.0..1.0);
                        if v.abs() < 0.05 {
                            v + 0.1
                        } else {
                            v
                        }
                    })
                    .collect();
                Tensor::new(s.as_slice(), data).expect("sized")
            })
            .collect();
        out.push((name, finite_diff_check(&f, &inputs, DEFAULT_EPS)?));
    }
    Ok(out)
}
