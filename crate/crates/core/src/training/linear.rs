//! Logistic regression on flattened correlation matrices.

use rand::Rng;
use rayon::prelude::*;

use super::config::TrainConfig;
use super::fit::{fit_loop, prepare};
use super::folds::kfold_split;
use super::metrics::{argmax, Metrics};
use super::report::{FoldReport, TrainReport};
use crate::data::{pearson_matrix, upper_triangle, Dataset};
use crate::error::{Error, Result};
use crate::numerics::Tensor;
use crate::rng::substream;

pub const LINEAR_NAME: &str = "linear";

/// Strict upper triangle of the sample's Pearson matrix: `N(N−1)/2` values.
pub fn correlation_features(dataset: &Dataset) -> Result<Vec<Vec<f64>>> {
    dataset.samples.par_iter().map(|s| Ok(upper_triangle(&pearson_matrix(&s.signal)?))).collect()
}

/// Column means and population standard deviations over `rows`;
/// constant columns get unit scale so they standardise to zero.
fn column_stats(features: &[Vec<f64>], rows: &[usize]) -> (Vec<f64>, Vec<f64>) {
    let f = features[rows[0]].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; f];
    for &r in rows {
        for (m, v) in mean.iter_mut().zip(&features[r]) {
            *m += v / n;
        }
    }
    let mut sd = vec![0.0; f];
    for &r in rows {
        for ((s, v), m) in sd.iter_mut().zip(&features[r]).zip(&mean) {
            *s += (v - m).powi(2) / n;
        }
    }
    let sd = sd.into_iter().map(|v| if v > 1e-24 { v.sqrt() } else { 1.0 }).collect();
    (mean, sd)
}

fn standardized(features: &[Vec<f64>], rows: &[usize], mean: &[f64], sd: &[f64]) -> Tensor {
    let f = mean.len();
    let mut data = Vec::with_capacity(rows.len() * f);
    for &r in rows {
        data.extend(features[r].iter().zip(mean).zip(sd).map(|((v, m), s)| (v - m) / s));
    }
    Tensor::new([rows.len(), f], data).expect("sized")
}

fn linear_fold(
    features: &[Vec<f64>],
    labels: &[usize],
    fold: usize,
    train: &[usize],
    test: &[usize],
    tc: &TrainConfig,
) -> Result<FoldReport> {
    let f = features[0].len();
    let (mean, sd) = column_stats(features, train);
    let x_train = standardized(features, train, &mean, &sd);
    let y_train: Vec<usize> = train.iter().map(|&i| labels[i]).collect();

    let mut init = substream(tc.seed, &format!("init.linear.fold_{fold}"));
    let bound = (1.0 / f as f64).sqrt();
    let w = Tensor::new([f, 2], (0..2 * f).map(|_| init.random_range(-bound..=bound)).collect())?;
    let mut leaves = vec![w, Tensor::zeros([2])];
    let mut shuffle = substream(tc.seed, &format!("shuffle.linear.fold_{fold}"));
    let mut report = FoldReport::new(fold, train.len(), test.len());
    let curve = fit_loop(&mut leaves, &[true, true], train.len(), tc, &mut shuffle, |tape, vars, batch| {
        let rows: Vec<f64> = batch.iter().flat_map(|&i| x_train.row(i).to_vec()).collect();
        let x = tape.constant(Tensor::new([batch.len(), f], rows)?);
        let logits = tape.channel_mix(x, vars[0])?;
        let logits = tape.add_bias(logits, vars[1])?;
        let probs = tape.softmax_rows(logits)?;
        let y: Vec<usize> = batch.iter().map(|&i| y_train[i]).collect();
        tape.nll(probs, &y)
    });
    match curve {
        Ok(curve) => report.loss_curve = curve,
        Err(Error::Divergence(msg)) => {
            report.failure = Some(msg);
            return Ok(report);
        }
        Err(e) => return Err(e),
    }
    let x_test = standardized(features, test, &mean, &sd);
    let (w, b) = (&leaves[0], &leaves[1]);
    let predicted: Vec<usize> = (0..test.len())
        .map(|r| {
            let x = x_test.row(r);
            let logits: Vec<f64> = (0..2)
                .map(|c| b.data()[c] + x.iter().enumerate().map(|(k, v)| v * w.data()[k * 2 + c]).sum::<f64>())
                .collect();
            argmax(&logits)
        })
        .collect();
    let truth: Vec<usize> = test.iter().map(|&i| labels[i]).collect();
    report.metrics = Some(Metrics::from_predictions(&predicted, &truth)?);
    Ok(report)
}

/// Cross-validated logistic regression on z-scored correlation features,
/// with the same folds, optimiser and schedule as the network.
pub fn train_linear_baseline(dataset: &Dataset, tc: &TrainConfig) -> Result<TrainReport> {
    tc.validate()?;
    dataset.validate()?;
    if dataset.channels() != 1 {
        return Err(Error::Dimension(format!("correlation features need one channel, got {}", dataset.channels())));
    }
    let data = prepare(dataset, tc);
    let features = correlation_features(&data)?;
    let labels = data.labels();
    let folds = kfold_split(&labels, tc.folds, tc.seed)?;
    let reports = folds
        .par_iter()
        .enumerate()
        .map(|(k, fold)| linear_fold(&features, &labels, k, &fold.train, &fold.test, tc))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainReport::new(LINEAR_NAME, &dataset.name, reports, tc.clone(), None))
}
