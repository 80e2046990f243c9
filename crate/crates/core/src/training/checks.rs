//! The finite-difference suite: every primitive and every model variant.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::mean_corr_adjacency;
use crate::error::{Error, Result};
use crate::model::{
    model_grad_check, score_margin, AdjacencyMode, ModelConfig, ModelParams, NodeSignalTensor, Variant,
};
use crate::numerics::{primitive_suite, Tensor};
use crate::rng::substream;

pub const PRIMITIVE_TOLERANCE: f64 = 1e-6;
pub const MODEL_TOLERANCE: f64 = 1e-4;
/// Smallest `|E_s·E_t|` score allowed in a check instance.
pub const KINK_MARGIN: f64 = 1e-2;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckLine {
    pub name: String,
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub coordinates: usize,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.max_rel_error < self.tolerance
    }
}

/// A small random model instance: `N = 4`, `T = 16`, `f = 4`, two samples.
pub struct CheckInstance {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub samples: Vec<NodeSignalTensor>,
    pub labels: Vec<usize>,
}

pub fn gradcheck_instance(variant: Variant, seed: u64) -> Result<CheckInstance> {
    let base = ModelConfig { filters: 4, embed_dim: 3, ..ModelConfig::for_nodes(4) };
    let mut config = variant.apply(&base);
    let mut rng = substream(seed, &format!("gradcheck.{}", variant.name()));
    let samples: Vec<NodeSignalTensor> = (0..2)
        .map(|_| {
            let data = (0..4 * 16).map(|_| rng.random_range(-1.0..1.0)).collect();
            NodeSignalTensor::new(Tensor::new([4, 16, 1], data).expect("sized"), None)
        })
        .collect::<Result<_>>()?;
    if config.adjacency == AdjacencyMode::FixedCorrelation {
        config.fixed_adjacency = Some(mean_corr_adjacency(&samples)?);
    }
    for _ in 0..1000 {
        let params = ModelParams::init(&config, &mut rng)?;
        if score_margin(&params) > KINK_MARGIN {
            return Ok(CheckInstance { config, params, samples, labels: vec![0, 1] });
        }
    }
    Err(Error::GradCheck("no initialisation clear of the relu kink".into()))
}

pub fn variant_gradcheck(variant: Variant, seed: u64) -> Result<CheckLine> {
    let inst = gradcheck_instance(variant, seed)?;
    let refs: Vec<&NodeSignalTensor> = inst.samples.iter().collect();
    let r = model_grad_check(&inst.config, &inst.params, &refs, &inst.labels, seed)?;
    Ok(CheckLine {
        name: format!("model/{}", variant.name()),
        max_rel_error: r.max_rel_error,
        tolerance: MODEL_TOLERANCE,
        coordinates: r.coordinates,
    })
}

/// Every primitive, then the whole model under every variant.
pub fn gradient_suite(seed: u64) -> Result<Vec<CheckLine>> {
    let mut lines: Vec<CheckLine> = primitive_suite(seed)?
        .into_iter()
        .map(|(name, r)| CheckLine {
            name: format!("primitive/{name}"),
            max_rel_error: r.max_rel_error,
            tolerance: PRIMITIVE_TOLERANCE,
            coordinates: r.coordinates,
        })
        .collect();
    for v in Variant::ALL {
        lines.push(variant_gradcheck(v, seed)?);
    }
    Ok(lines)
}
