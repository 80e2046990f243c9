//! Flat `key=value` run configuration with dotted namespaces.
//!
//! Resolution order is defaults, then the config file, then `--set` flags,
//! then dedicated command-line flags. Every key must already exist in the
//! defaults; its JSON type there decides how the text value is parsed.

use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};
use dastgcn::model::{doubling_dilations, AdjacencyMode, ModelConfig};
use dastgcn::training::Candidate;
use dastgcn::{TrainConfig, TransferMode};
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::UsageError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSection {
    /// Model to run: a network variant name or `linear`.
    pub name: String,
    #[serde(rename = "K")]
    pub blocks: usize,
    /// Learned graphs; 0 means one per block.
    #[serde(rename = "M")]
    pub graphs: usize,
    pub f: usize,
    pub ks: usize,
    pub d: usize,
    pub dropout: f64,
    pub tlc: bool,
    pub adjacency: AdjacencyMode,
    /// Empty means doubling dilations `1, 2, 4, ...`.
    pub dilations: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransferSection {
    pub mode: TransferMode,
    pub task: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScaleSection {
    /// Samples per class.
    pub sizes: Vec<usize>,
    pub models: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AblateSection {
    pub linear: bool,
}

/// Every tunable of a run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub model: ModelSection,
    pub train: TrainConfig,
    pub transfer: TransferSection,
    pub scale: ScaleSection,
    pub ablate: AblateSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        let m = ModelConfig::default();
        RunConfig {
            model: ModelSection {
                name: "dast-gcn".into(),
                blocks: m.blocks,
                graphs: 0,
                f: m.filters,
                ks: m.kernel_size,
                d: m.embed_dim,
                dropout: m.dropout,
                tlc: m.use_tlc,
                adjacency: m.adjacency,
                dilations: Vec::new(),
            },
            train: TrainConfig::default(),
            transfer: TransferSection { mode: TransferMode::default(), task: "classification".into() },
            scale: ScaleSection {
                sizes: vec![250, 500, 1000, 2500],
                models: vec!["dast-gcn".into(), "dast-gcn_corr".into(), "linear".into()],
            },
            ablate: AblateSection { linear: true },
        }
    }
}

impl RunConfig {
    /// Fills derived defaults so the recorded configuration is explicit.
    pub fn resolved(mut self) -> Self {
        if self.model.graphs == 0 {
            self.model.graphs = self.model.blocks;
        }
        if self.model.dilations.is_empty() {
            self.model.dilations = doubling_dilations(self.model.blocks);
        }
        self
    }

    pub fn candidate(&self) -> Result<Candidate> {
        self.model.name.parse::<Candidate>().map_err(|e| anyhow!(UsageError(format!("model.name: {e}"))))
    }

    pub fn scale_candidates(&self) -> Result<Vec<Candidate>> {
        self.scale
            .models
            .iter()
            .map(|m| m.parse::<Candidate>().map_err(|e| anyhow!(UsageError(format!("scale.models: {e}")))))
            .collect()
    }

    /// Architecture for `nodes` nodes with `channels` input channels,
    /// before any ablation variant is applied.
    pub fn base_model(&self, nodes: usize, channels: usize) -> ModelConfig {
        let m = &self.model;
        ModelConfig {
            nodes,
            in_channels: channels,
            blocks: m.blocks,
            filters: m.f,
            kernel_size: m.ks,
            embed_dim: m.d,
            graphs: if m.graphs == 0 { m.blocks } else { m.graphs },
            dilations: if m.dilations.is_empty() { doubling_dilations(m.blocks) } else { m.dilations.clone() },
            dropout: m.dropout,
            use_tlc: m.tlc,
            adjacency: m.adjacency,
            num_classes: 2,
            fixed_adjacency: None,
        }
    }
}

/// Parses `key=value` lines; `#` starts a comment line.
pub fn parse_pairs(text: &str, origin: &str) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(anyhow!(UsageError(format!("{origin}:{}: expected key=value, got '{line}'", no + 1))));
        };
        out.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(out)
}

pub fn read_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    parse_pairs(&text, &path.display().to_string())
}

fn parse_value(key: &str, current: &Value, text: &str) -> Result<Value> {
    let bad = |what: &str| anyhow!(UsageError(format!("{key}: expected {what}, got '{text}'")));
    Ok(match current {
        Value::Bool(_) => Value::Bool(text.parse().map_err(|_| bad("true or false"))?),
        Value::Number(n) if n.is_f64() => serde_json::Number::from_f64(text.parse().map_err(|_| bad("a number"))?)
            .map(Value::Number)
            .ok_or_else(|| bad("a finite number"))?,
        Value::Number(_) => Value::from(text.parse::<u64>().map_err(|_| bad("a non-negative integer"))?),
        Value::String(_) => Value::String(text.to_string()),
        Value::Array(items) => {
            let parts = text.split(',').map(str::trim).filter(|s| !s.is_empty());
            let numeric =
                items.first().map_or_else(|| key.ends_with("sizes") || key.ends_with("dilations"), Value::is_number);
            if numeric {
                Value::Array(
                    parts
                        .map(|p| p.parse::<u64>().map(Value::from).map_err(|_| bad("a comma-separated integer list")))
                        .collect::<Result<_>>()?,
                )
            } else {
                Value::Array(parts.map(|p| Value::String(p.to_string())).collect())
            }
        }
        _ => return Err(anyhow!(UsageError(format!("{key} cannot be set")))),
    })
}

/// Applies dotted `key=value` overrides to `base`.
pub fn apply(base: &RunConfig, pairs: &[(String, String)]) -> Result<RunConfig> {
    let mut tree = serde_json::to_value(base).expect("config serialises");
    for (key, text) in pairs {
        let mut node = &mut tree;
        let parts: Vec<&str> = key.split('.').collect();
        for (i, part) in parts.iter().enumerate() {
            let map: &mut Map<String, Value> = match node {
                Value::Object(m) => m,
                _ => return Err(anyhow!(UsageError(format!("unknown config key '{key}'")))),
            };
            let Some(child) = map.get_mut(*part) else {
                return Err(anyhow!(UsageError(format!("unknown config key '{key}'"))));
            };
            if i + 1 == parts.len() {
                if child.is_object() {
                    return Err(anyhow!(UsageError(format!("'{key}' is a section, not a key"))));
                }
                *child = parse_value(key, child, text)?;
            }
            node = child;
        }
    }
    serde_json::from_value(tree).map_err(|e| anyhow!(UsageError(format!("invalid config value: {e}"))))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dotted_keys_set_typed_values() {
        let pairs =
            parse_pairs("# c\nmodel.K = 2\ntrain.lr_max=0.01\nmodel.tlc=false\nscale.sizes=50,100\n", "t").unwrap();
        let c = apply(&RunConfig::default(), &pairs).unwrap();
        assert_eq!(c.model.blocks, 2);
        assert_eq!(c.train.lr_max, 0.01);
        assert!(!c.model.tlc);
        assert_eq!(c.scale.sizes, [50, 100]);
        let r = c.resolved();
        assert_eq!((r.model.graphs, r.model.dilations.clone()), (2, vec![1, 2]));
    }

    #[test]
    fn unknown_and_malformed_keys_are_usage_errors() {
        for bad in ["model.Q=1", "train=3", "train.epochs=many", "model.adjacency=sideways", "nonsense"] {
            let e = parse_pairs(bad, "t").and_then(|p| apply(&RunConfig::default(), &p)).unwrap_err();
            assert!(e.downcast_ref::<UsageError>().is_some(), "{bad}: {e}");
        }
    }

    #[test]
    fn later_pairs_win() {
        let pairs = parse_pairs("train.seed=1\ntrain.seed=9", "t").unwrap();
        assert_eq!(apply(&RunConfig::default(), &pairs).unwrap().train.seed, 9);
    }
}
