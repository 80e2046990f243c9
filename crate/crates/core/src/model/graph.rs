//! The network recorded on a [`Tape`], batched over samples.
//!
//! Activations are laid out `[B, N, T, channels]`. Every block below is the
//! batched form of the corresponding single-sample operation in
//! [`super::layers`].

use rand::Rng;

use super::config::{AdjacencyMode, ModelConfig};
use super::params::{Block, Dense, Factors, Params};
use super::signal::NodeSignalTensor;
use crate::error::{Error, Result};
use crate::numerics::{Tape, Tensor, Var};

/// Handles to the interesting intermediate values of one forward pass.
#[derive(Clone, Debug)]
pub struct Forward {
    /// Class probabilities `[B, classes]`.
    pub probs: Var,
    /// Input to the block stack, `[B, N, T, f]`.
    pub trunk_in: Var,
    /// Output of the block stack, `[B, N, T, f]`.
    pub trunk_out: Var,
    /// One `A′` per learned graph (or the fixed matrix).
    pub adjacencies: Vec<Var>,
}

/// Forward differences with the last value replicated.
fn forward_diff(x: &[f64]) -> Vec<f64> {
    let t = x.len();
    let mut d: Vec<f64> = x.windows(2).map(|w| w[1] - w[0]).collect();
    match d.last().copied() {
        Some(last) => d.push(last),
        None => d.resize(t, 0.0),
    }
    d
}

/// Stacks `[x, x′, x″]` per node: `[N, T, 1] → [N, T, 3]`.
pub fn lag_channels(x: &NodeSignalTensor) -> Result<Tensor> {
    if x.channels() != 1 {
        return Err(Error::Config(format!(
            "temporal lag correction needs a single-channel signal, got {} channels",
            x.channels()
        )));
    }
    let (n, t) = (x.nodes(), x.timepoints());
    let mut out = Vec::with_capacity(n * t * 3);
    for series in x.tensor().data().chunks_exact(t) {
        let d1 = forward_diff(series);
        let d2 = forward_diff(&d1);
        for k in 0..t {
            out.extend_from_slice(&[series[k], d1[k], d2[k]]);
        }
    }
    Tensor::new([n, t, 3], out)
}

/// Packs samples of equal shape into the `[B, N, T, c]` model input,
/// adding lag channels when the configuration asks for them.
pub fn stack_inputs(samples: &[&NodeSignalTensor], config: &ModelConfig) -> Result<Tensor> {
    let Some(first) = samples.first() else {
        return Err(Error::Contract("empty batch".into()));
    };
    let (n, t) = (first.nodes(), first.timepoints());
    if n != config.nodes {
        return Err(Error::Dimension(format!("signal has {n} nodes, model expects {}", config.nodes)));
    }
    if t < config.kernel_size {
        return Err(Error::Config(format!(
            "series of length {t} is shorter than the kernel size {}",
            config.kernel_size
        )));
    }
    let width = config.input_width();
    let mut data = Vec::with_capacity(samples.len() * n * t * width);
    for s in samples {
        if s.nodes() != n || s.timepoints() != t {
            return Err(Error::Dimension(format!(
                "batch mixes shapes [{n}, {t}] and [{}, {}]",
                s.nodes(),
                s.timepoints()
            )));
        }
        if config.use_tlc {
            data.extend_from_slice(lag_channels(s)?.data());
        } else {
            if s.channels() != width {
                return Err(Error::Dimension(format!("signal has {} channels, model expects {width}", s.channels())));
            }
            data.extend_from_slice(s.tensor().data());
        }
    }
    Tensor::new([samples.len(), n, t, width], data)
}

pub fn dense(tape: &mut Tape, x: Var, p: &Dense<Var>) -> Result<Var> {
    let y = tape.channel_mix(x, p.weight)?;
    tape.add_bias(y, p.bias)
}

/// `tanh(conv(x; W_f)) ⊙ sigmoid(conv(x; W_g))`.
pub fn gated_tcn(tape: &mut Tape, x: Var, filter: &Dense<Var>, gate: &Dense<Var>, dilation: usize) -> Result<Var> {
    let f = tape.conv1d(x, filter.weight, filter.bias, dilation)?;
    let g = tape.conv1d(x, gate.weight, gate.bias, dilation)?;
    let f = tape.tanh(f);
    let g = tape.sigmoid(g);
    tape.mul(f, g)
}

/// `I + softmax_rows(relu(E_s · E_t))`; tied factors use `E_t = E_sᵀ`.
pub fn adaptive_adjacency(tape: &mut Tape, factors: &Factors<Var>) -> Result<Var> {
    let target = match factors.target {
        Some(t) => t,
        None => tape.transpose(factors.source)?,
    };
    let scores = tape.matmul(factors.source, target)?;
    let scores = tape.relu(scores);
    let soft = tape.softmax_rows(scores)?;
    let n = tape.shape(soft)[0];
    let eye = tape.constant(Tensor::eye(n));
    tape.add(eye, soft)
}

/// `H = A′ · X · W + b` at every timepoint; `x: [B, N, T, f]`.
pub fn gcn(tape: &mut Tape, adj: Var, x: Var, w: &Dense<Var>) -> Result<Var> {
    let mixed = tape.node_mix(adj, x)?;
    dense(tape, mixed, w)
}

/// `x + gcn(A′, gated_tcn(x))`.
pub fn st_block(tape: &mut Tape, x: Var, block: &Block<Var>, adj: Var, dilation: usize) -> Result<Var> {
    let z = gated_tcn(tape, x, &block.filter, &block.gate, dilation)?;
    let h = gcn(tape, adj, z, &block.gcn)?;
    tape.add(x, h)
}

/// Adjacency per learned graph, or the configured constant.
pub fn adjacencies(tape: &mut Tape, params: &Params<Var>, config: &ModelConfig) -> Result<Vec<Var>> {
    if config.adjacency == AdjacencyMode::FixedCorrelation {
        let Some(fixed) = &config.fixed_adjacency else {
            return Err(Error::Config("fixed_correlation mode requires a supplied N×N matrix".into()));
        };
        return Ok(vec![tape.constant(fixed.clone())]);
    }
    params.factors.iter().map(|f| adaptive_adjacency(tape, f)).collect()
}

/// The whole network on a `[B, N, T, c]` input.
///
/// `dropout` supplies the mask stream in training mode; `None` is inference.
pub fn forward<R: Rng>(
    tape: &mut Tape,
    params: &Params<Var>,
    config: &ModelConfig,
    input: Tensor,
    dropout: Option<&mut R>,
) -> Result<Forward> {
    let &[b, n, _, _] = input.shape() else {
        return Err(Error::Dimension(format!("model input must be [B, N, T, c], got {:?}", input.shape())));
    };
    let x = tape.constant(input);
    let x = match &params.tlc {
        Some(tlc) => dense(tape, x, tlc)?,
        None => x,
    };
    let trunk_in = dense(tape, x, &params.scale_up)?;
    let adjs = adjacencies(tape, params, config)?;
    let mut h = trunk_in;
    for (k, block) in params.blocks.iter().enumerate() {
        let adj = if adjs.len() == 1 { adjs[0] } else { adjs[config.graph_for_block(k)] };
        h = st_block(tape, h, block, adj, config.dilations[k])?;
    }
    let trunk_out = h;
    let r = dense(tape, trunk_out, &params.reduce)?;
    let t = tape.shape(r)[2];
    let r = tape.reshape(r, &[b, n, t])?;
    let mut pooled = tape.mean_last(r)?;
    if let Some(rng) = dropout {
        if config.dropout > 0.0 {
            let keep = 1.0 - config.dropout;
            let mask = (0..b * n).map(|_| if rng.random::<f64>() < keep { 1.0 / keep } else { 0.0 }).collect();
            let mask = tape.constant(Tensor::new([b, n], mask)?);
            pooled = tape.mul(pooled, mask)?;
        }
    }
    let logits = dense(tape, pooled, &params.fc)?;
    let probs = tape.softmax_rows(logits)?;
    Ok(Forward { probs, trunk_in, trunk_out, adjacencies: adjs })
}
