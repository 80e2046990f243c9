use serde::{Deserialize, Serialize};

use super::candidates::Candidate;
use super::checks::{variant_gradcheck, CheckLine};
use super::config::TrainConfig;
use super::report::TrainReport;
use crate::data::Dataset;
use crate::error::Result;
use crate::model::{ModelConfig, Variant};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub reports: Vec<TrainReport>,
    pub gradchecks: Vec<CheckLine>,
}

impl AblationReport {
    pub fn report(&self, name: &str) -> Option<&TrainReport> {
        self.reports.iter().find(|r| r.model == name)
    }
}

/// Cross-validates every network variant (and optionally the linear
/// baseline) on identical folds, and gradient-checks each variant.
pub fn ablation_grid(
    dataset: &Dataset,
    base: &ModelConfig,
    tc: &TrainConfig,
    with_linear: bool,
) -> Result<AblationReport> {
    let mut candidates: Vec<Candidate> = Variant::ALL.into_iter().map(Candidate::Network).collect();
    if with_linear {
        candidates.push(Candidate::Linear);
    }
    let gradchecks = Variant::ALL.into_iter().map(|v| variant_gradcheck(v, tc.seed)).collect::<Result<_>>()?;
    let reports = candidates.iter().map(|c| c.cross_validate(dataset, base, tc)).collect::<Result<_>>()?;
    Ok(AblationReport { reports, gradchecks })
}
