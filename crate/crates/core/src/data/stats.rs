//! Per-series normalisation and correlation utilities.

use crate::error::{Error, Result};
use crate::model::NodeSignalTensor;
use crate::numerics::{gemm, GemmOp, Tensor};

/// Series whose spread is below this fraction of their scale count as constant.
const CONSTANT_TOL: f64 = 1e-12;

fn is_constant(sd: f64, mean: f64) -> bool {
    sd <= CONSTANT_TOL * mean.abs().max(1.0)
}

/// Z-scores every node/channel series with the population (1/T) standard
/// deviation. Constant series map to zeros.
pub fn zscore(x: &NodeSignalTensor) -> NodeSignalTensor {
    let (n, t, c) = (x.nodes(), x.timepoints(), x.channels());
    let src = x.tensor().data();
    let mut out = vec![0.0; src.len()];
    for i in 0..n {
        for ch in 0..c {
            let at = |k: usize| i * t * c + k * c + ch;
            let mean = (0..t).map(|k| src[at(k)]).sum::<f64>() / t as f64;
            let var = (0..t).map(|k| (src[at(k)] - mean).powi(2)).sum::<f64>() / t as f64;
            let sd = var.sqrt();
            if !is_constant(sd, mean) {
                for k in 0..t {
                    out[at(k)] = (src[at(k)] - mean) / sd;
                }
            }
        }
    }
    let tensor = Tensor::new([n, t, c], out).expect("same shape");
    NodeSignalTensor::new(tensor, x.tr_seconds).expect("finite")
}

/// Pearson correlation between node series of a single-channel signal.
///
/// Symmetric with unit diagonal; every entry involving a constant series is 0.
pub fn pearson_matrix(x: &NodeSignalTensor) -> Result<Tensor> {
    if x.channels() != 1 {
        return Err(Error::Dimension(format!("pearson_matrix needs one channel, got {}", x.channels())));
    }
    let (n, t) = (x.nodes(), x.timepoints());
    if t < 2 {
        return Err(Error::Contract(format!("correlation needs at least 2 timepoints, got {t}")));
    }
    let mut centered = x.tensor().data().to_vec();
    let mut live = vec![true; n];
    for (i, row) in centered.chunks_exact_mut(t).enumerate() {
        let mean = row.iter().sum::<f64>() / t as f64;
        row.iter_mut().for_each(|v| *v -= mean);
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if is_constant(norm / (t as f64).sqrt(), mean) {
            live[i] = false;
            row.iter_mut().for_each(|v| *v = 0.0);
        } else {
            row.iter_mut().for_each(|v| *v /= norm);
        }
    }
    let mut r = vec![0.0; n * n];
    gemm(n, t, n, &centered, GemmOp::N, &centered, GemmOp::T, 0.0, &mut r);
    for i in 0..n {
        for j in 0..n {
            let v = &mut r[i * n + j];
            *v = if !live[i] || !live[j] {
                0.0
            } else if i == j {
                1.0
            } else {
                v.clamp(-1.0, 1.0)
            };
        }
    }
    for i in 0..n {
        for j in 0..i {
            r[i * n + j] = r[j * n + i];
        }
    }
    Tensor::new([n, n], r)
}

/// Elementwise mean of per-sample Pearson matrices.
pub fn mean_pearson<'a>(samples: impl IntoIterator<Item = &'a NodeSignalTensor>) -> Result<Tensor> {
    let mut acc: Option<Tensor> = None;
    let mut count = 0usize;
    for s in samples {
        let p = pearson_matrix(s)?;
        match &mut acc {
            Some(a) => {
                if a.shape() != p.shape() {
                    return Err(Error::Dimension(format!("samples have {} and {} nodes", a.shape()[0], p.shape()[0])));
                }
                a.add_assign(&p);
            }
            None => acc = Some(p),
        }
        count += 1;
    }
    let acc = acc.ok_or_else(|| Error::Contract("mean correlation of an empty sample set".into()))?;
    Ok(acc.map(|v| v / count as f64))
}

/// `I + softmax_rows(relu(C))` with the diagonal of `C` zeroed: the same
/// normalisation as a learned adjacency, applied to a fixed score matrix.
pub fn normalize_scores(c: &Tensor) -> Result<Tensor> {
    let [n, m] = c.dims2()?;
    if n != m {
        return Err(Error::Dimension(format!("score matrix must be square, got {:?}", c.shape())));
    }
    let mut out = vec![0.0; n * n];
    for i in 0..n {
        let row: Vec<f64> = (0..n).map(|j| if i == j { 0.0 } else { c.data()[i * n + j].max(0.0) }).collect();
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exp: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
        let s: f64 = exp.iter().sum();
        for j in 0..n {
            out[i * n + j] = exp[j] / s + if i == j { 1.0 } else { 0.0 };
        }
    }
    Tensor::new([n, n], out)
}

/// Fixed adjacency for the correlation ablation from training samples.
pub fn mean_corr_adjacency<'a>(samples: impl IntoIterator<Item = &'a NodeSignalTensor>) -> Result<Tensor> {
    normalize_scores(&mean_pearson(samples)?)
}

/// Strict upper triangle of a square matrix, row by row.
pub fn upper_triangle(m: &Tensor) -> Vec<f64> {
    let n = m.shape()[0];
    (0..n).flat_map(|i| ((i + 1)..n).map(move |j| (i, j))).map(|(i, j)| m.data()[i * n + j]).collect()
}
