use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::fit::train_model;
use super::linear::{train_linear_baseline, LINEAR_NAME};
use super::report::TrainReport;
use crate::data::Dataset;
use crate::error::Result;
use crate::model::{ModelConfig, Variant};

/// A model that can be cross-validated: a network variant or the linear
/// correlation baseline.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum Candidate {
    Network(Variant),
    Linear,
}

impl Candidate {
    pub fn name(self) -> &'static str {
        match self {
            Candidate::Network(v) => v.name(),
            Candidate::Linear => LINEAR_NAME,
        }
    }

    /// Cross-validates on `dataset`; `base` is the unablated architecture.
    pub fn cross_validate(self, dataset: &Dataset, base: &ModelConfig, tc: &TrainConfig) -> Result<TrainReport> {
        match self {
            Candidate::Network(v) => train_model(dataset, &v.apply(base), tc),
            Candidate::Linear => train_linear_baseline(dataset, tc),
        }
    }
}

impl fmt::Display for Candidate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Candidate {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == LINEAR_NAME {
            Ok(Candidate::Linear)
        } else {
            s.parse().map(Candidate::Network)
        }
    }
}

impl From<Candidate> for String {
    fn from(c: Candidate) -> String {
        c.name().to_string()
    }
}

impl TryFrom<String> for Candidate {
    type Error = crate::Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}
