use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::fit::EpochLoss;
use super::metrics::{MeanSd, Metrics};
use crate::model::ModelConfig;
use crate::numerics::Tensor;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    pub train_size: usize,
    pub test_size: usize,
    /// `None` when the fold failed.
    pub metrics: Option<Metrics>,
    pub failure: Option<String>,
    pub loss_curve: Vec<EpochLoss>,
    /// Realised `A′` of every learned graph at the end of training.
    pub adjacency: Vec<Tensor>,
}

impl FoldReport {
    pub fn new(fold: usize, train_size: usize, test_size: usize) -> Self {
        FoldReport {
            fold,
            train_size,
            test_size,
            metrics: None,
            failure: None,
            loss_curve: Vec::new(),
            adjacency: Vec::new(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub accuracy: Option<MeanSd>,
    pub sensitivity: Option<MeanSd>,
    pub specificity: Option<MeanSd>,
    pub failed_folds: usize,
}

impl Summary {
    pub fn of(folds: &[FoldReport]) -> Self {
        let ok: Vec<&Metrics> = folds.iter().filter_map(|f| f.metrics.as_ref()).collect();
        let acc: Vec<f64> = ok.iter().map(|m| m.accuracy).collect();
        let sens: Vec<f64> = ok.iter().filter_map(|m| m.sensitivity).collect();
        let spec: Vec<f64> = ok.iter().filter_map(|m| m.specificity).collect();
        Summary {
            accuracy: MeanSd::of(&acc),
            sensitivity: MeanSd::of(&sens),
            specificity: MeanSd::of(&spec),
            failed_folds: folds.len() - ok.len(),
        }
    }
}

/// Cross-validated results of one model on one dataset.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub model: String,
    pub dataset: String,
    pub folds: Vec<FoldReport>,
    pub summary: Summary,
    pub train_config: TrainConfig,
    pub model_config: Option<ModelConfig>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NA".to_string(), |x| x.to_string())
}

fn pct(m: &Option<MeanSd>) -> String {
    match m {
        Some(MeanSd { mean, sd: Some(sd), .. }) => format!("{:.1}±{:.1}%", 100.0 * mean, 100.0 * sd),
        Some(MeanSd { mean, sd: None, .. }) => format!("{:.1}%", 100.0 * mean),
        None => "NA".into(),
    }
}

impl TrainReport {
    pub fn new(
        model: &str,
        dataset: &str,
        folds: Vec<FoldReport>,
        train_config: TrainConfig,
        model_config: Option<ModelConfig>,
    ) -> Self {
        let summary = Summary::of(&folds);
        TrainReport { model: model.into(), dataset: dataset.into(), folds, summary, train_config, model_config }
    }

    pub fn mean_accuracy(&self) -> Option<f64> {
        self.summary.accuracy.map(|m| m.mean)
    }

    /// Per-fold accuracies; failed folds are `None`.
    pub fn fold_accuracies(&self) -> Vec<Option<f64>> {
        self.folds.iter().map(|f| f.metrics.map(|m| m.accuracy)).collect()
    }

    /// `fold,accuracy,sensitivity,specificity,tp,tn,fp,fn,status`; undefined
    /// values are `NA`.
    pub fn metrics_csv(&self) -> String {
        let mut s = String::from("fold,accuracy,sensitivity,specificity,tp,tn,fp,fn,status\n");
        for f in &self.folds {
            match &f.metrics {
                Some(m) => writeln!(
                    s,
                    "{},{},{},{},{},{},{},{},ok",
                    f.fold,
                    m.accuracy,
                    opt(m.sensitivity),
                    opt(m.specificity),
                    m.tp,
                    m.tn,
                    m.fp,
                    m.fn_
                ),
                None => writeln!(s, "{},NA,NA,NA,NA,NA,NA,NA,failed", f.fold),
            }
            .expect("string write");
        }
        s
    }

    /// `epoch,loss,lr` of one fold.
    pub fn loss_csv(&self, fold: usize) -> String {
        let mut s = String::from("epoch,loss,lr\n");
        if let Some(f) = self.folds.get(fold) {
            for e in &f.loss_curve {
                writeln!(s, "{},{},{}", e.epoch, e.loss, e.lr).expect("string write");
            }
        }
        s
    }

    /// One-line `model: acc a±s% sens ... spec ...` summary.
    pub fn summary_line(&self) -> String {
        let mut line = format!(
            "{}: acc {} sens {} spec {}",
            self.model,
            pct(&self.summary.accuracy),
            pct(&self.summary.sensitivity),
            pct(&self.summary.specificity)
        );
        if self.summary.failed_folds > 0 {
            write!(line, " ({} failed folds)", self.summary.failed_folds).expect("string write");
        }
        line
    }
}
