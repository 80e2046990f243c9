//! Single-sample forms of the network operations, on plain tensors.
//!
//! These run the same tape code as training on a batch of one and return
//! values only. They are the reference entry points for inspection and
//! tests; training uses [`super::graph`] directly.

use super::config::ModelConfig;
use super::graph;
use super::params::{AdjacencyFactors, Block, Dense, Factors, ModelParams};
use super::signal::NodeSignalTensor;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::StreamRng;

fn bind_dense(tape: &mut Tape, d: &Dense<Tensor>) -> Dense<Var> {
    Dense { weight: tape.constant(d.weight.clone()), bias: tape.constant(d.bias.clone()) }
}

fn as_batch(x: &Tensor) -> Result<Tensor> {
    let &[n, t, c] = x.shape() else {
        return Err(Error::Dimension(format!("expected an N×T×f tensor, got {:?}", x.shape())));
    };
    x.clone().with_grad(false).reshape([1, n, t, c])
}

fn unbatch(t: &Tensor) -> Tensor {
    let shape = t.shape()[1..].to_vec();
    t.clone().reshape(shape).expect("leading axis is 1")
}

/// Mixes `[x, x′, x″]` through the 3→1 linear 1×1 convolution.
pub fn temporal_lag_correction(x: &NodeSignalTensor, tlc: &Dense<Tensor>) -> Result<NodeSignalTensor> {
    let lags = graph::lag_channels(x)?;
    let mut tape = Tape::new();
    let input = tape.constant(lags);
    let p = bind_dense(&mut tape, tlc);
    let y = graph::dense(&mut tape, input, &p)?;
    NodeSignalTensor::new(tape.value(y).clone(), x.tr_seconds)
}

/// Gated dilated temporal convolution on `x: [N, T, f]`.
pub fn gated_tcn_layer(x: &Tensor, filter: &Dense<Tensor>, gate: &Dense<Tensor>, dilation: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let xv = tape.constant(x.clone());
    let (f, g) = (bind_dense(&mut tape, filter), bind_dense(&mut tape, gate));
    let z = graph::gated_tcn(&mut tape, xv, &f, &g, dilation)?;
    Ok(tape.value(z).clone())
}

/// `A′ = I + softmax_rows(relu(E_s · E_t))`.
pub fn adaptive_adjacency(factors: &AdjacencyFactors) -> Result<Tensor> {
    let mut tape = Tape::new();
    let f = Factors {
        source: tape.constant(factors.source.clone()),
        target: factors.target.as_ref().map(|t| tape.constant(t.clone())),
    };
    let a = graph::adaptive_adjacency(&mut tape, &f)?;
    Ok(tape.value(a).clone())
}

/// `H[:, t, :] = adj · x[:, t, :] · W + b` for `x: [N, T, f]`.
pub fn gcn_layer(adj: &Tensor, x: &Tensor, w: &Dense<Tensor>) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a = tape.constant(adj.clone());
    let xv = tape.constant(as_batch(x)?);
    let p = bind_dense(&mut tape, w);
    let h = graph::gcn(&mut tape, a, xv, &p)?;
    Ok(unbatch(tape.value(h)))
}

/// One spatio-temporal block with residual connection on `x: [N, T, f]`.
pub fn st_block_forward(x: &Tensor, block: &Block<Tensor>, adj: &Tensor, dilation: usize) -> Result<Tensor> {
    let mut tape = Tape::new();
    let a = tape.constant(adj.clone());
    let xv = tape.constant(as_batch(x)?);
    let b = Block {
        filter: bind_dense(&mut tape, &block.filter),
        gate: bind_dense(&mut tape, &block.gate),
        gcn: bind_dense(&mut tape, &block.gcn),
    };
    let out = graph::st_block(&mut tape, xv, &b, a, dilation)?;
    Ok(unbatch(tape.value(out)))
}

/// Runs the block stack alone on `x: [N, T, f]`.
pub fn trunk_forward(x: &Tensor, params: &ModelParams, config: &ModelConfig) -> Result<Tensor> {
    let mut tape = Tape::new();
    let bound = params.tensors.map(|_, t| tape.constant(t.clone()));
    let adjs = graph::adjacencies(&mut tape, &bound, config)?;
    let mut h = tape.constant(as_batch(x)?);
    for (k, block) in bound.blocks.iter().enumerate() {
        let adj = if adjs.len() == 1 { adjs[0] } else { adjs[config.graph_for_block(k)] };
        h = graph::st_block(&mut tape, h, block, adj, config.dilations[k])?;
    }
    Ok(unbatch(tape.value(h)))
}

/// Class probabilities for one sample. Dropout is applied only when a
/// mask stream is supplied.
pub fn model_forward(
    x: &NodeSignalTensor,
    params: &ModelParams,
    config: &ModelConfig,
    dropout: Option<&mut StreamRng>,
) -> Result<Tensor> {
    let probs = predict_batch(&[x], params, config, dropout)?;
    Ok(probs.reshape([config.num_classes]).expect("one row"))
}

/// Class probabilities `[B, classes]` for samples of equal shape.
pub fn predict_batch(
    samples: &[&NodeSignalTensor],
    params: &ModelParams,
    config: &ModelConfig,
    dropout: Option<&mut StreamRng>,
) -> Result<Tensor> {
    let input = graph::stack_inputs(samples, config)?;
    let mut tape = Tape::new();
    let bound = params.tensors.map(|_, t| tape.constant(t.clone()));
    let fwd = graph::forward(&mut tape, &bound, config, input, dropout)?;
    Ok(tape.value(fwd.probs).clone())
}

/// Realised `A′` matrices of a parameter set, one per learned graph.
pub fn realized_adjacencies(params: &ModelParams, config: &ModelConfig) -> Result<Vec<Tensor>> {
    let mut tape = Tape::new();
    let bound = params.tensors.map(|_, t| tape.constant(t.clone()));
    let adjs = graph::adjacencies(&mut tape, &bound, config)?;
    Ok(adjs.into_iter().map(|a| tape.value(a).clone()).collect())
}
