use std::fmt::Write as _;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::candidates::Candidate;
use super::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::ModelConfig;
use crate::rng::substream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScalingRow {
    /// Samples per class.
    pub size: usize,
    pub model: String,
    pub acc_mean: f64,
    /// Sample standard deviation across folds.
    pub acc_sd: f64,
}

pub fn scaling_csv(rows: &[ScalingRow]) -> String {
    let mut s = String::from("size,model,acc_mean,acc_sd\n");
    for r in rows {
        writeln!(s, "{},{},{},{}", r.size, r.model, r.acc_mean, r.acc_sd).expect("string write");
    }
    s
}

/// Stratified subsets with `size` samples per class. Subsets are nested:
/// each size takes a prefix of one seeded per-class shuffle.
pub fn stratified_subsets(labels: &[usize], sizes: &[usize], seed: u64) -> Result<Vec<Vec<usize>>> {
    let classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        by_class[l].push(i);
    }
    let need = sizes.iter().copied().max().unwrap_or(0);
    let short: Vec<String> = by_class
        .iter()
        .enumerate()
        .filter(|(_, m)| m.len() < need)
        .map(|(c, m)| format!("class {c} has {} (short by {})", m.len(), need - m.len()))
        .collect();
    if classes < 2 || !short.is_empty() {
        return Err(Error::Contract(format!(
            "scaling needs {need} samples per class of 2 classes: {}",
            if short.is_empty() { "only one class present".to_string() } else { short.join(", ") }
        )));
    }
    let mut rng = substream(seed, "scale.subsample");
    for members in &mut by_class {
        members.shuffle(&mut rng);
    }
    Ok(sizes
        .iter()
        .map(|&s| {
            let mut idx: Vec<usize> = by_class.iter().flat_map(|m| m[..s].iter().copied()).collect();
            idx.sort_unstable();
            idx
        })
        .collect())
}

/// Cross-validated accuracy of every candidate at every per-class size.
pub fn scaling_experiment(
    dataset: &Dataset,
    candidates: &[Candidate],
    base: &ModelConfig,
    tc: &TrainConfig,
    sizes: &[usize],
) -> Result<Vec<ScalingRow>> {
    let subsets = stratified_subsets(&dataset.labels(), sizes, tc.seed)?;
    let mut rows = Vec::new();
    for (&size, idx) in sizes.iter().zip(&subsets) {
        let sub = dataset.subset(idx);
        for &c in candidates {
            let report = c.cross_validate(&sub, base, tc)?;
            let acc = report
                .summary
                .accuracy
                .ok_or_else(|| Error::Divergence(format!("{} failed on every fold at size {size}", c.name())))?;
            rows.push(ScalingRow { size, model: c.name().into(), acc_mean: acc.mean, acc_sd: acc.sd.unwrap_or(0.0) });
        }
    }
    Ok(rows)
}
