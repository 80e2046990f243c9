//! The optimisation loop and cross-validated training of the network.

use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamConfig, AdamState};
use super::config::{cosine_warmup_lr, TrainConfig};
use super::folds::kfold_split;
use super::metrics::{argmax, Metrics};
use super::report::{FoldReport, TrainReport};
use crate::data::{mean_corr_adjacency, zscore, Dataset};
use crate::error::{Error, Result};
use crate::model::{
    graph, is_factor_name, predict_batch, realized_adjacencies, AdjacencyMode, ModelConfig, ModelParams,
    NodeSignalTensor, Params,
};
use crate::numerics::{Tape, Tensor, Var};
use crate::rng::{substream, StreamRng};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLoss {
    pub epoch: usize,
    /// Mean training loss over the samples of the epoch.
    pub loss: f64,
    pub lr: f64,
}

/// Mini-batch Adam over `leaves` with the warm-up cosine schedule.
///
/// Each epoch reshuffles `0..n` with `shuffle` and keeps the last partial
/// batch. `batch_loss` records the mean loss of one batch on the tape, with
/// one [`Var`] per leaf; leaves with `trainable[i] == false` are recorded as
/// constants and never updated.
pub(crate) fn fit_loop<F>(
    leaves: &mut [Tensor],
    trainable: &[bool],
    n: usize,
    tc: &TrainConfig,
    shuffle: &mut StreamRng,
    mut batch_loss: F,
) -> Result<Vec<EpochLoss>>
where
    F: FnMut(&mut Tape, &[Var], &[usize]) -> Result<Var>,
{
    tc.validate()?;
    if n == 0 {
        return Err(Error::Contract("no training samples".into()));
    }
    let mut state = AdamState::new(leaves, AdamConfig::default());
    let mut order: Vec<usize> = (0..n).collect();
    let mut curve = Vec::with_capacity(tc.epochs);
    for epoch in 0..tc.epochs {
        let lr = cosine_warmup_lr(epoch, tc);
        order.shuffle(shuffle);
        let mut total = 0.0;
        for batch in order.chunks(tc.batch_size) {
            let mut tape = Tape::new();
            let vars: Vec<Var> = leaves
                .iter()
                .zip(trainable)
                .map(|(t, &train)| if train { tape.param(t.clone()) } else { tape.constant(t.clone()) })
                .collect();
            let loss = batch_loss(&mut tape, &vars, batch)?;
            let value = tape.value(loss).item();
            if !value.is_finite() {
                return Err(Error::Divergence(format!("loss became {value} at epoch {epoch} (lr {lr:.3e})")));
            }
            let grads = tape.backward(loss)?;
            let grads: Vec<Option<Tensor>> = vars.iter().map(|&v| grads.get(v).cloned()).collect();
            adam_step(leaves, &grads, &mut state, lr)?;
            total += value * batch.len() as f64;
        }
        curve.push(EpochLoss { epoch, loss: total / n as f64, lr });
    }
    Ok(curve)
}

/// Applies the configured per-series normalisation to every sample.
pub fn prepare(dataset: &Dataset, tc: &TrainConfig) -> Dataset {
    if !tc.zscore {
        return dataset.clone();
    }
    let mut out = dataset.clone();
    out.samples.par_iter_mut().for_each(|s| s.signal = zscore(&s.signal));
    out
}

/// Resolves data-dependent parts of the configuration on the training
/// samples: the fixed adjacency of the correlation variant.
pub fn resolve_config(model: &ModelConfig, train: &[&NodeSignalTensor]) -> Result<ModelConfig> {
    let mut cfg = model.clone();
    if cfg.adjacency == AdjacencyMode::FixedCorrelation {
        cfg.fixed_adjacency = Some(mean_corr_adjacency(train.iter().copied())?);
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Outcome of training one model on one sample set.
#[derive(Clone, Debug)]
pub struct FitOutcome {
    pub config: ModelConfig,
    pub params: ModelParams,
    pub loss_curve: Vec<EpochLoss>,
}

/// Packs per-sample `[1, N, T, c]` inputs into one `[B, N, T, c]` tensor.
fn concat_inputs(inputs: &[&Tensor]) -> Result<Tensor> {
    let first = inputs[0].shape();
    let mut shape = first.to_vec();
    shape[0] = inputs.len();
    let mut data = Vec::with_capacity(inputs.len() * inputs[0].len());
    for t in inputs {
        data.extend_from_slice(t.data());
    }
    Tensor::new(shape, data)
}

/// Trains a network on `data[train]`.
///
/// Random streams are `init.{tag}`, `shuffle.{tag}` and `dropout.{tag}`
/// under the configured seed. `init` replaces the fresh initialisation,
/// which is how pretrained graph factors enter.
pub fn fit_model(
    data: &Dataset,
    train: &[usize],
    model: &ModelConfig,
    tc: &TrainConfig,
    tag: &str,
    init: Option<ModelParams>,
) -> Result<FitOutcome> {
    let signals: Vec<&NodeSignalTensor> = train.iter().map(|&i| &data.samples[i].signal).collect();
    let labels: Vec<usize> = train.iter().map(|&i| data.samples[i].label).collect();
    let config = resolve_config(model, &signals)?;
    let params = match init {
        Some(p) => {
            p.check_against(&config)?;
            p
        }
        None => ModelParams::init(&config, &mut substream(tc.seed, &format!("init.{tag}")))?,
    };
    let inputs: Vec<Tensor> = signals.iter().map(|s| graph::stack_inputs(&[*s], &config)).collect::<Result<_>>()?;

    let names = params.tensors.names();
    let trainable: Vec<bool> = names.iter().map(|n| !(params.frozen_factors && is_factor_name(n))).collect();
    let mut leaves = Vec::with_capacity(names.len());
    params.tensors.visit(|_, t| leaves.push(t.clone()));
    let template = params.tensors.clone();

    let mut shuffle = substream(tc.seed, &format!("shuffle.{tag}"));
    let mut dropout = substream(tc.seed, &format!("dropout.{tag}"));
    let loss_curve = fit_loop(&mut leaves, &trainable, train.len(), tc, &mut shuffle, |tape, vars, batch| {
        let mut it = vars.iter();
        let bound: Params<Var> = template.map(|_, _| *it.next().expect("one var per leaf"));
        // Samples of different lengths are forwarded in separate groups.
        let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
        for &i in batch {
            let t = inputs[i].shape()[2];
            match groups.iter_mut().find(|(gt, _)| *gt == t) {
                Some((_, g)) => g.push(i),
                None => groups.push((t, vec![i])),
            }
        }
        let mut total: Option<Var> = None;
        for (_, group) in &groups {
            let input = concat_inputs(&group.iter().map(|&i| &inputs[i]).collect::<Vec<_>>())?;
            let fwd = graph::forward(tape, &bound, &config, input, Some(&mut dropout))?;
            let group_labels: Vec<usize> = group.iter().map(|&i| labels[i]).collect();
            let mut loss = tape.nll(fwd.probs, &group_labels)?;
            if groups.len() > 1 {
                loss = tape.scale(loss, group.len() as f64 / batch.len() as f64);
            }
            total = Some(match total {
                Some(acc) => tape.add(acc, loss)?,
                None => loss,
            });
        }
        Ok(total.expect("batch is non-empty"))
    })?;

    let mut trained = params;
    let mut it = leaves.into_iter();
    trained.tensors.visit_mut(|_, t| *t = it.next().expect("one leaf per tensor"));
    Ok(FitOutcome { config, params: trained, loss_curve })
}

/// Inference-mode metrics on `samples`.
pub fn evaluate(
    config: &ModelConfig,
    params: &ModelParams,
    samples: &[&NodeSignalTensor],
    labels: &[usize],
) -> Result<Metrics> {
    if samples.is_empty() {
        return Err(Error::Contract("evaluation on an empty sample set".into()));
    }
    let predicted = predict_classes(config, params, samples)?;
    Metrics::from_predictions(&predicted, labels)
}

/// Arg-max class per sample, batched over runs of equal length.
pub fn predict_classes(
    config: &ModelConfig,
    params: &ModelParams,
    samples: &[&NodeSignalTensor],
) -> Result<Vec<usize>> {
    let mut out = Vec::with_capacity(samples.len());
    let mut start = 0;
    while start < samples.len() {
        let t = samples[start].timepoints();
        let mut end = start + 1;
        while end < samples.len() && end - start < 64 && samples[end].timepoints() == t {
            end += 1;
        }
        let probs = predict_batch(&samples[start..end], params, config, None)?;
        let c = config.num_classes;
        out.extend(probs.data().chunks_exact(c).map(argmax));
        start = end;
    }
    Ok(out)
}

fn subset_refs<'a>(data: &'a Dataset, idx: &[usize]) -> (Vec<&'a NodeSignalTensor>, Vec<usize>) {
    (idx.iter().map(|&i| &data.samples[i].signal).collect(), idx.iter().map(|&i| data.samples[i].label).collect())
}

/// Trains and evaluates one fold. Divergence marks the fold failed.
pub(crate) fn run_fold(
    data: &Dataset,
    fold: usize,
    train: &[usize],
    test: &[usize],
    model: &ModelConfig,
    tc: &TrainConfig,
    init: Option<ModelParams>,
) -> Result<FoldReport> {
    let tag = format!("fold_{fold}");
    let mut report = FoldReport::new(fold, train.len(), test.len());
    match fit_model(data, train, model, tc, &tag, init) {
        Ok(out) => {
            let (signals, labels) = subset_refs(data, test);
            report.metrics = Some(evaluate(&out.config, &out.params, &signals, &labels)?);
            report.adjacency = realized_adjacencies(&out.params, &out.config)?;
            report.loss_curve = out.loss_curve;
        }
        Err(Error::Divergence(msg)) => report.failure = Some(msg),
        Err(e) => return Err(e),
    }
    Ok(report)
}

/// Stratified cross-validation of the network.
pub fn train_model(dataset: &Dataset, model: &ModelConfig, tc: &TrainConfig) -> Result<TrainReport> {
    tc.validate()?;
    dataset.validate()?;
    model.validate_shape(dataset.nodes(), dataset.channels())?;
    let data = prepare(dataset, tc);
    let folds = kfold_split(&data.labels(), tc.folds, tc.seed)?;
    let reports = folds
        .par_iter()
        .enumerate()
        .map(|(k, f)| run_fold(&data, k, &f.train, &f.test, model, tc, None))
        .collect::<Result<Vec<_>>>()?;
    Ok(TrainReport::new(&model_name(model), &dataset.name, reports, tc.clone(), Some(model.clone())))
}

/// Display name of a configuration: its ablation variant when it matches one.
pub fn model_name(model: &ModelConfig) -> String {
    let base = ModelConfig {
        use_tlc: true,
        graphs: model.blocks,
        adjacency: AdjacencyMode::AdaptiveDirected,
        ..model.clone()
    };
    crate::model::Variant::ALL
        .into_iter()
        .find(|v| {
            let c = v.apply(&base);
            c.use_tlc == model.use_tlc && c.graphs == model.graphs && c.adjacency == model.adjacency
        })
        .map_or_else(|| "dast-gcn_custom".to_string(), |v| v.name().to_string())
}
