//! Exporting learned graph structure and initialising new models from it.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::csv::write_matrix_csv;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::model::{
    adaptive_adjacency, AdjacencyFactors, AdjacencyMode, Container, ContainerKind, Factors, ModelConfig, ModelParams,
};
use crate::numerics::Tensor;
use crate::rng::substream;
use crate::training::{fit_model, kfold_split, prepare, run_fold, MeanSd, TrainConfig, TrainReport};

/// How transferred factors are treated while training on the target.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransferMode {
    /// Factors are constants; only the remaining weights train.
    #[default]
    Frozen,
    /// Factors start from the bundle and keep training.
    Finetune,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub source_dataset: String,
    pub task: String,
    pub seed: u64,
    /// Hex SHA-256 of the serialised model and training configurations.
    pub config_hash: String,
}

impl Provenance {
    pub fn new(source_dataset: &str, task: &str, model: &ModelConfig, train: &TrainConfig) -> Result<Self> {
        let bytes = serde_json::to_vec(&(model, train)).map_err(|e| Error::json("provenance", e))?;
        let digest = Sha256::digest(&bytes);
        let mut config_hash = String::with_capacity(64);
        for b in digest {
            write!(config_hash, "{b:02x}").expect("string write");
        }
        Ok(Provenance { source_dataset: source_dataset.into(), task: task.into(), seed: train.seed, config_hash })
    }
}

/// Learned adjacency factors detached from the model that produced them.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphBundle {
    pub nodes: usize,
    pub embed_dim: usize,
    /// One entry per learned graph `M`.
    pub factors: Vec<AdjacencyFactors>,
    pub provenance: Provenance,
}

#[derive(Serialize, Deserialize)]
struct BundleHeader {
    nodes: usize,
    embed_dim: usize,
    graphs: usize,
    tied: bool,
    provenance: Provenance,
}

impl GraphBundle {
    pub fn from_params(params: &ModelParams, provenance: Provenance) -> Result<Self> {
        let Some(first) = params.factors().first() else {
            return Err(Error::Transfer("model has no learned adjacency factors to export".into()));
        };
        let bundle = GraphBundle {
            nodes: first.nodes(),
            embed_dim: first.embed_dim(),
            factors: params.factors().to_vec(),
            provenance,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn graphs(&self) -> usize {
        self.factors.len()
    }

    pub fn is_tied(&self) -> bool {
        self.factors.first().is_some_and(Factors::is_tied)
    }

    /// Factor shapes agree with `N` and `d`; all graphs share one tying.
    pub fn validate(&self) -> Result<()> {
        if self.factors.is_empty() {
            return Err(Error::Transfer("bundle holds no graphs".into()));
        }
        let tied = self.is_tied();
        for (m, f) in self.factors.iter().enumerate() {
            let target_ok = f.target.as_ref().is_none_or(|t| t.shape() == [self.embed_dim, self.nodes]);
            if f.source.shape() != [self.nodes, self.embed_dim] || !target_ok || f.is_tied() != tied {
                return Err(Error::Transfer(format!(
                    "graph {m} factors do not match N = {}, d = {}",
                    self.nodes, self.embed_dim
                )));
            }
        }
        Ok(())
    }

    /// Realised `A′` of every graph.
    pub fn adjacencies(&self) -> Result<Vec<Tensor>> {
        self.factors.iter().map(adaptive_adjacency).collect()
    }

    pub fn to_container(&self) -> Result<Container> {
        let header = BundleHeader {
            nodes: self.nodes,
            embed_dim: self.embed_dim,
            graphs: self.graphs(),
            tied: self.is_tied(),
            provenance: self.provenance.clone(),
        };
        let config = serde_json::to_value(&header).map_err(|e| Error::json("graph bundle header", e))?;
        let mut records = Vec::new();
        for (m, f) in self.factors.iter().enumerate() {
            records.push((format!("factors{m}.source"), f.source.clone().with_grad(false)));
            if let Some(t) = &f.target {
                records.push((format!("factors{m}.target"), t.clone().with_grad(false)));
            }
        }
        Ok(Container { kind: ContainerKind::GraphBundle, config, records })
    }

    pub fn from_container(c: &Container, path: &Path) -> Result<Self> {
        let corrupt = |reason: String| Error::CorruptFile { path: path.to_path_buf(), reason };
        if c.kind != ContainerKind::GraphBundle {
            return Err(corrupt("not a graph bundle".into()));
        }
        let h: BundleHeader =
            serde_json::from_value(c.config.clone()).map_err(|e| Error::json(path.display().to_string(), e))?;
        let factors = (0..h.graphs)
            .map(|m| {
                let get = |part: &str| {
                    c.record(&format!("factors{m}.{part}"))
                        .cloned()
                        .ok_or_else(|| corrupt(format!("record 'factors{m}.{part}' is missing")))
                };
                Ok(Factors { source: get("source")?, target: if h.tied { None } else { Some(get("target")?) } })
            })
            .collect::<Result<_>>()?;
        let bundle = GraphBundle { nodes: h.nodes, embed_dim: h.embed_dim, factors, provenance: h.provenance };
        bundle.validate().map_err(|e| corrupt(e.to_string()))?;
        Ok(bundle)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.to_container()?.write(path)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_container(&Container::read(path)?, path)
    }
}

/// Files written by [`export_graph`].
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportedGraph {
    pub bundle: PathBuf,
    /// `A′` of each graph, in graph order.
    pub adjacency_csv: Vec<PathBuf>,
}

/// Writes `graph.dgcp` and `adjacency_{m}.csv` into `dir`.
pub fn export_graph(params: &ModelParams, provenance: Provenance, dir: &Path) -> Result<(GraphBundle, ExportedGraph)> {
    let bundle = GraphBundle::from_params(params, provenance)?;
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join("graph.dgcp");
    bundle.write(&path)?;
    let mut csvs = Vec::new();
    for (m, a) in bundle.adjacencies()?.iter().enumerate() {
        let p = dir.join(format!("adjacency_{m}.csv"));
        write_matrix_csv(&p, a)?;
        csvs.push(p);
    }
    Ok((bundle, ExportedGraph { bundle: path, adjacency_csv: csvs }))
}

pub fn import_graph(path: &Path) -> Result<GraphBundle> {
    GraphBundle::read(path)
}

/// Fresh parameters for `config` whose adjacency factors come from `bundle`.
///
/// Non-factor weights are drawn from `rng` exactly as [`ModelParams::init`]
/// would draw them. An `M = K` bundle loads into one graph by taking graph
/// 0; a one-graph bundle is copied into every graph. Undirected factors
/// load into a directed model as `E_t = E_sᵀ`.
pub fn init_with_pretrained(
    bundle: &GraphBundle,
    config: &ModelConfig,
    mode: TransferMode,
    rng: &mut impl Rng,
) -> Result<ModelParams> {
    bundle.validate()?;
    if !config.has_factors() {
        return Err(Error::Transfer(format!(
            "{} adjacency has no learned factors to initialise",
            config.adjacency.as_str()
        )));
    }
    if bundle.nodes != config.nodes {
        return Err(Error::Transfer(format!(
            "bundle has N = {} nodes but the model has N = {}",
            bundle.nodes, config.nodes
        )));
    }
    if bundle.embed_dim != config.embed_dim {
        return Err(Error::Transfer(format!(
            "bundle has embedding width d = {} but the model has d = {}",
            bundle.embed_dim, config.embed_dim
        )));
    }
    let tied = config.adjacency == AdjacencyMode::AdaptiveUndirected;
    if tied && !bundle.is_tied() {
        return Err(Error::Transfer("directed factors cannot initialise an undirected model".into()));
    }
    let pick = |m: usize| -> Result<&AdjacencyFactors> {
        match (bundle.graphs(), config.graphs) {
            (b, c) if b == c => Ok(&bundle.factors[m]),
            (_, 1) => Ok(&bundle.factors[0]),
            (1, _) => Ok(&bundle.factors[0]),
            (b, c) => Err(Error::Transfer(format!("bundle has M = {b} graphs but the model has M = {c}"))),
        }
    };
    let mut params = ModelParams::init(config, rng)?;
    for m in 0..config.graphs {
        let src = pick(m)?;
        let target = if tied { None } else { Some(src.target_matrix()) };
        params.tensors.factors[m] = Factors { source: src.source.clone(), target };
    }
    params.frozen_factors = mode == TransferMode::Frozen;
    Ok(params)
}

/// Paired pretrained-versus-scratch cross-validation on the target.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub source_dataset: String,
    pub target_dataset: String,
    pub mode: TransferMode,
    pub provenance: Provenance,
    pub pretrained: TrainReport,
    pub scratch: TrainReport,
    /// Pretrained minus scratch accuracy per fold; `None` where either failed.
    pub differences: Vec<Option<f64>>,
    /// Mean and sample sd of the defined differences.
    pub difference: Option<MeanSd>,
}

impl TransferReport {
    /// `fold,arm,accuracy,...` with one row per fold and arm.
    pub fn metrics_csv(&self) -> String {
        let mut out = String::from("fold,arm,accuracy,sensitivity,specificity,tp,tn,fp,fn,status\n");
        for (arm, report) in [("pretrained", &self.pretrained), ("scratch", &self.scratch)] {
            for line in report.metrics_csv().lines().skip(1) {
                let (fold, rest) = line.split_once(',').expect("metrics row has a fold column");
                writeln!(out, "{fold},{arm},{rest}").expect("string write");
            }
        }
        out
    }

    pub fn summary_line(&self) -> String {
        let diff = match self.difference {
            Some(MeanSd { mean, sd, .. }) => {
                format!("{:+.1}% (sd {})", 100.0 * mean, sd.map_or("NA".into(), |s| format!("{:.1}%", 100.0 * s)))
            }
            None => "NA".into(),
        };
        format!(
            "pretrained {} | scratch {} | paired difference {diff}",
            self.pretrained.summary_line(),
            self.scratch.summary_line()
        )
    }
}

/// Model trained on the source for transfer: the single-graph form of `base`.
pub fn source_config(base: &ModelConfig) -> Result<ModelConfig> {
    let cfg = ModelConfig { graphs: 1, ..base.clone() };
    if !cfg.has_factors() {
        return Err(Error::Config("transfer needs an adaptive adjacency".into()));
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Trains a one-graph model on all of `source`, then cross-validates on
/// `target` twice on identical folds and seeds: once with the transferred
/// factors and once from scratch. Only the factor initialisation differs
/// between the arms.
pub fn transfer_experiment(
    source: &Dataset,
    target: &Dataset,
    base: &ModelConfig,
    tc: &TrainConfig,
    mode: TransferMode,
) -> Result<(TransferReport, GraphBundle)> {
    tc.validate()?;
    source.validate()?;
    target.validate()?;
    if source.nodes() != target.nodes() {
        return Err(Error::Transfer(format!(
            "source has N = {} nodes but target has N = {}",
            source.nodes(),
            target.nodes()
        )));
    }
    let config = source_config(base)?;
    config.validate_shape(source.nodes(), source.channels())?;
    config.validate_shape(target.nodes(), target.channels())?;

    let src = prepare(source, tc);
    let all: Vec<usize> = (0..src.len()).collect();
    let trained = fit_model(&src, &all, &config, tc, "source", None)?;
    let provenance = Provenance::new(&source.name, "transfer", &config, tc)?;
    let bundle = GraphBundle::from_params(&trained.params, provenance.clone())?;

    let tgt = prepare(target, tc);
    let folds = kfold_split(&tgt.labels(), tc.folds, tc.seed)?;
    let pairs = folds
        .par_iter()
        .enumerate()
        .map(|(k, f)| {
            let init =
                init_with_pretrained(&bundle, &config, mode, &mut substream(tc.seed, &format!("init.fold_{k}")))?;
            let pre = run_fold(&tgt, k, &f.train, &f.test, &config, tc, Some(init))?;
            let scratch = run_fold(&tgt, k, &f.train, &f.test, &config, tc, None)?;
            Ok((pre, scratch))
        })
        .collect::<Result<Vec<_>>>()?;
    let (pre, scratch): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();

    let name = |arm: &str| format!("{}_{arm}", crate::training::model_name(&config));
    let pretrained = TrainReport::new(&name("pretrained"), &target.name, pre, tc.clone(), Some(config.clone()));
    let scratch = TrainReport::new(&name("scratch"), &target.name, scratch, tc.clone(), Some(config.clone()));
    let differences: Vec<Option<f64>> =
        pretrained.fold_accuracies().into_iter().zip(scratch.fold_accuracies()).map(|(a, b)| Some(a? - b?)).collect();
    let defined: Vec<f64> = differences.iter().flatten().copied().collect();
    let report = TransferReport {
        source_dataset: source.name.clone(),
        target_dataset: target.name.clone(),
        mode,
        provenance,
        pretrained,
        scratch,
        differences,
        difference: MeanSd::of(&defined),
    };
    Ok((report, bundle))
}
