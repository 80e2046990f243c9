//! Fixed workloads shared by the benchmarks.

use dastgcn::model::graph::{forward, stack_inputs};
use dastgcn::rng::{substream, StreamRng};
use dastgcn::{ModelConfig, ModelParams, NodeSignalTensor, Result, Tape, Tensor};
use rand::Rng;

/// One mini-batch of random signals together with an initialised model.
pub struct Workload {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub input: Tensor,
    pub labels: Vec<usize>,
}

impl Workload {
    /// Default architecture on `nodes` nodes and `batch` samples of length `timepoints`.
    pub fn new(nodes: usize, timepoints: usize, batch: usize, seed: u64) -> Result<Self> {
        let config = ModelConfig::for_nodes(nodes);
        let params = ModelParams::init(&config, &mut substream(seed, "bench.init"))?;
        let mut rng = substream(seed, "bench.data");
        let samples: Vec<NodeSignalTensor> = (0..batch)
            .map(|_| {
                let series: Vec<Vec<f64>> =
                    (0..nodes).map(|_| (0..timepoints).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
                NodeSignalTensor::from_series(&series)
            })
            .collect::<Result<_>>()?;
        let refs: Vec<&NodeSignalTensor> = samples.iter().collect();
        let input = stack_inputs(&refs, &config)?;
        let labels = (0..batch).map(|i| i % 2).collect();
        Ok(Workload { config, params, input, labels })
    }

    /// Inference forward pass; returns the first class probability.
    pub fn forward(&self) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params.tensors.map(|_, t| tape.constant(t.clone()));
        let fwd = forward::<StreamRng>(&mut tape, &bound, &self.config, self.input.clone(), None)?;
        Ok(tape.value(fwd.probs).data()[0])
    }

    /// Training-mode forward pass and full backward pass; returns the loss.
    pub fn forward_backward(&self) -> Result<f64> {
        let mut tape = Tape::new();
        let bound = self.params.tensors.map(|_, t| tape.param(t.clone()));
        let mut dropout = substream(0, "bench.dropout");
        let fwd = forward(&mut tape, &bound, &self.config, self.input.clone(), Some(&mut dropout))?;
        let loss = tape.nll(fwd.probs, &self.labels)?;
        tape.backward(loss)?;
        Ok(tape.value(loss).data()[0])
    }
}
