//! Trainable parameters.
//!
//! [`Params`] is generic over the leaf type so the same structure holds live
//! tensors (`Params<Tensor>`), their tape handles (`Params<Var>`) and
//! gradients (`Params<Option<Tensor>>`). [`Params::map`] and
//! [`Params::visit_mut`] walk the leaves in one canonical order, which is also
//! the checkpoint and optimizer-state order.

use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::Serialize;

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::numerics::{Gradients, Tape, Tensor, Var};

#[derive(Clone, Debug, PartialEq)]
pub struct Dense<T> {
    pub weight: T,
    pub bias: T,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Block<T> {
    pub filter: Dense<T>,
    pub gate: Dense<T>,
    pub gcn: Dense<T>,
}

/// Source/target node dictionaries of one learned graph.
/// `target == None` ties `E_t` to `E_sᵀ`.
#[derive(Clone, Debug, PartialEq)]
pub struct Factors<T> {
    pub source: T,
    pub target: Option<T>,
}

/// `E_s ∈ R^{N×d}` and `E_t ∈ R^{d×N}`.
pub type AdjacencyFactors = Factors<Tensor>;

impl AdjacencyFactors {
    pub fn nodes(&self) -> usize {
        self.source.shape()[0]
    }

    pub fn embed_dim(&self) -> usize {
        self.source.shape()[1]
    }

    pub fn is_tied(&self) -> bool {
        self.target.is_none()
    }

    /// `E_t`, materialising the transpose when tied.
    pub fn target_matrix(&self) -> Tensor {
        match &self.target {
            Some(t) => t.clone(),
            None => self.source.transpose().expect("source is a matrix"),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Params<T> {
    pub tlc: Option<Dense<T>>,
    pub scale_up: Dense<T>,
    pub blocks: Vec<Block<T>>,
    pub factors: Vec<Factors<T>>,
    pub reduce: Dense<T>,
    pub fc: Dense<T>,
}

impl<T> Dense<T> {
    fn map<U>(&self, prefix: &str, f: &mut impl FnMut(&str, &T) -> U) -> Dense<U> {
        Dense { weight: f(&format!("{prefix}.weight"), &self.weight), bias: f(&format!("{prefix}.bias"), &self.bias) }
    }

    fn visit_mut(&mut self, prefix: &str, f: &mut impl FnMut(&str, &mut T)) {
        f(&format!("{prefix}.weight"), &mut self.weight);
        f(&format!("{prefix}.bias"), &mut self.bias);
    }
}

impl<T> Params<T> {
    /// Structure-preserving map over every leaf, in canonical order.
    pub fn map<U>(&self, mut f: impl FnMut(&str, &T) -> U) -> Params<U> {
        let tlc = self.tlc.as_ref().map(|d| d.map("tlc", &mut f));
        let scale_up = self.scale_up.map("scale_up", &mut f);
        let blocks = self
            .blocks
            .iter()
            .enumerate()
            .map(|(k, b)| Block {
                filter: b.filter.map(&format!("block{k}.filter"), &mut f),
                gate: b.gate.map(&format!("block{k}.gate"), &mut f),
                gcn: b.gcn.map(&format!("block{k}.gcn"), &mut f),
            })
            .collect();
        let factors = self
            .factors
            .iter()
            .enumerate()
            .map(|(m, fa)| Factors {
                source: f(&format!("factors{m}.source"), &fa.source),
                target: fa.target.as_ref().map(|t| f(&format!("factors{m}.target"), t)),
            })
            .collect();
        let reduce = self.reduce.map("reduce", &mut f);
        let fc = self.fc.map("fc", &mut f);
        Params { tlc, scale_up, blocks, factors, reduce, fc }
    }

    pub fn visit(&self, mut f: impl FnMut(&str, &T)) {
        self.map(|n, t| f(n, t));
    }

    /// Mutable walk in the same order as [`Params::map`].
    pub fn visit_mut(&mut self, mut f: impl FnMut(&str, &mut T)) {
        if let Some(d) = &mut self.tlc {
            d.visit_mut("tlc", &mut f);
        }
        self.scale_up.visit_mut("scale_up", &mut f);
        for (k, b) in self.blocks.iter_mut().enumerate() {
            b.filter.visit_mut(&format!("block{k}.filter"), &mut f);
            b.gate.visit_mut(&format!("block{k}.gate"), &mut f);
            b.gcn.visit_mut(&format!("block{k}.gcn"), &mut f);
        }
        for (m, fa) in self.factors.iter_mut().enumerate() {
            f(&format!("factors{m}.source"), &mut fa.source);
            if let Some(t) = &mut fa.target {
                f(&format!("factors{m}.target"), t);
            }
        }
        self.reduce.visit_mut("reduce", &mut f);
        self.fc.visit_mut("fc", &mut f);
    }

    pub fn names(&self) -> Vec<String> {
        let mut out = Vec::new();
        self.visit(|n, _| out.push(n.to_string()));
        out
    }
}

pub fn is_factor_name(name: &str) -> bool {
    name.starts_with("factors")
}

/// Live parameters of one model.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelParams {
    pub tensors: Params<Tensor>,
    /// Frozen factors are recorded as constants and never updated.
    pub frozen_factors: bool,
}

fn uniform(shape: &[usize], fan_in: usize, rng: &mut impl Rng) -> Tensor {
    let bound = (1.0 / fan_in as f64).sqrt();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("sized")
}

fn dense(c_in: usize, c_out: usize, rng: &mut impl Rng) -> Dense<Tensor> {
    Dense { weight: uniform(&[c_in, c_out], c_in, rng), bias: Tensor::zeros([c_out]) }
}

fn conv(ks: usize, c_in: usize, c_out: usize, rng: &mut impl Rng) -> Dense<Tensor> {
    Dense { weight: uniform(&[ks, c_in, c_out], ks * c_in, rng), bias: Tensor::zeros([c_out]) }
}

fn normal(shape: &[usize], std: f64, rng: &mut impl Rng) -> Tensor {
    let dist = Normal::new(0.0, std).expect("positive std");
    let n = shape.iter().product();
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("sized")
}

impl ModelParams {
    /// Fresh initialisation: dense and conv weights `U(±√(1/fan_in))`, zero
    /// biases, node dictionaries `N(0, 1/√d)`.
    pub fn init(config: &ModelConfig, rng: &mut impl Rng) -> Result<Self> {
        config.validate()?;
        let (n, f, ks, d) = (config.nodes, config.filters, config.kernel_size, config.embed_dim);
        let tlc = config.use_tlc.then(|| dense(3, 1, rng));
        let scale_up = dense(if config.use_tlc { 1 } else { config.in_channels }, f, rng);
        let blocks = (0..config.blocks)
            .map(|_| Block { filter: conv(ks, f, f, rng), gate: conv(ks, f, f, rng), gcn: dense(f, f, rng) })
            .collect();
        let std = 1.0 / (d as f64).sqrt();
        let tied = config.adjacency == super::AdjacencyMode::AdaptiveUndirected;
        let factors = if config.has_factors() {
            (0..config.graphs)
                .map(|_| Factors {
                    source: normal(&[n, d], std, rng),
                    target: (!tied).then(|| normal(&[d, n], std, rng)),
                })
                .collect()
        } else {
            Vec::new()
        };
        let reduce = dense(f, 1, rng);
        let fc = dense(n, config.num_classes, rng);
        let tensors = Params { tlc, scale_up, blocks, factors, reduce, fc };
        Ok(ModelParams { tensors, frozen_factors: false })
    }

    pub fn factors(&self) -> &[AdjacencyFactors] {
        &self.tensors.factors
    }

    pub fn count(&self) -> usize {
        let mut total = 0;
        self.tensors.visit(|_, t| total += t.len());
        total
    }

    /// Records every tensor on `tape`. Frozen factors become constants.
    pub fn bind(&self, tape: &mut Tape) -> Params<Var> {
        let frozen = self.frozen_factors;
        self.tensors.map(
            |name, t| {
                if frozen && is_factor_name(name) {
                    tape.constant(t.clone())
                } else {
                    tape.param(t.clone())
                }
            },
        )
    }

    /// Checks that every tensor matches the shape `config` implies.
    pub fn check_against(&self, config: &ModelConfig) -> Result<()> {
        let template = Self::template(config)?;
        let want = template.tensors.map(|n, t| (n.to_string(), t.shape().to_vec()));
        let got = self.tensors.map(|n, t| (n.to_string(), t.shape().to_vec()));
        let mut want_v = Vec::new();
        want.visit(|_, x| want_v.push(x.clone()));
        let mut got_v = Vec::new();
        got.visit(|_, x| got_v.push(x.clone()));
        if want_v != got_v {
            return Err(Error::Dimension(format!(
                "parameter layout does not match configuration: expected {want_v:?}, found {got_v:?}"
            )));
        }
        Ok(())
    }

    /// All-zero parameters with the layout of `config`.
    pub fn template(config: &ModelConfig) -> Result<Self> {
        let mut rng = crate::rng::substream(0, "template");
        let mut p = Self::init(config, &mut rng)?;
        p.tensors.visit_mut(|_, t| t.data_mut().fill(0.0));
        Ok(p)
    }
}

/// Gradients of bound parameters, in the same structure.
pub fn collect_gradients(bound: &Params<Var>, grads: &Gradients) -> Params<Option<Tensor>> {
    bound.map(|_, v| grads.get(*v).cloned())
}

/// Itemised parameter count.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ParamCount {
    pub items: Vec<(String, usize)>,
    pub total: usize,
}

impl fmt::Display for ParamCount {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let width = self.items.iter().map(|(n, _)| n.len()).max().unwrap_or(0);
        for (name, n) in &self.items {
            writeln!(f, "{name:<width$}  {n:>8}")?;
        }
        write!(f, "{:<width$}  {:>8}", "total", self.total)
    }
}

/// Closed-form parameter count; independent of the series length.
pub fn param_count(config: &ModelConfig) -> ParamCount {
    let (n, f, ks, d) = (config.nodes, config.filters, config.kernel_size, config.embed_dim);
    let mut items = Vec::new();
    if config.use_tlc {
        items.push(("temporal lag correction 1x1 (3->1)".to_string(), 3 + 1));
    }
    let c0 = if config.use_tlc { 1 } else { config.in_channels };
    items.push((format!("scale-up 1x1 ({c0}->{f})"), c0 * f + f));
    for k in 0..config.blocks {
        items.push((format!("block {k} gated TCN (filter + gate, ks={ks})"), 2 * (ks * f * f + f)));
        items.push((format!("block {k} graph conv W ({f}x{f})"), f * f + f));
    }
    if config.has_factors() {
        let per = match config.adjacency {
            super::AdjacencyMode::AdaptiveUndirected => n * d,
            _ => 2 * n * d,
        };
        for m in 0..config.graphs {
            items.push((format!("graph {m} node dictionaries (N={n}, d={d})"), per));
        }
    }
    items.push((format!("reduce 1x1 ({f}->1)"), f + 1));
    items.push((format!("fully connected ({n}->{})", config.num_classes), n * config.num_classes + config.num_classes));
    let total = items.iter().map(|(_, c)| c).sum();
    ParamCount { items, total }
}
