use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::Tensor;

/// Where each block's adjacency comes from.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdjacencyMode {
    /// `I + softmax_rows(relu(E_s · E_t))` with free source/target dictionaries.
    AdaptiveDirected,
    /// As above with `E_t` tied to `E_sᵀ`.
    AdaptiveUndirected,
    /// A constant matrix built from training-set correlations.
    FixedCorrelation,
}

impl AdjacencyMode {
    pub fn as_str(self) -> &'static str {
        match self {
            AdjacencyMode::AdaptiveDirected => "adaptive_directed",
            AdjacencyMode::AdaptiveUndirected => "adaptive_undirected",
            AdjacencyMode::FixedCorrelation => "fixed_correlation",
        }
    }
}

impl FromStr for AdjacencyMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "adaptive_directed" => Ok(AdjacencyMode::AdaptiveDirected),
            "adaptive_undirected" => Ok(AdjacencyMode::AdaptiveUndirected),
            "fixed_correlation" => Ok(AdjacencyMode::FixedCorrelation),
            other => Err(Error::Config(format!("unknown adjacency mode '{other}'"))),
        }
    }
}

/// Architecture hyperparameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Graph nodes `N`.
    pub nodes: usize,
    /// Input channels `C` of the raw signal.
    pub in_channels: usize,
    /// Spatio-temporal blocks `K`.
    pub blocks: usize,
    /// Hidden channels `f`.
    pub filters: usize,
    /// Temporal kernel width `ks` (odd).
    pub kernel_size: usize,
    /// Node dictionary width `d`.
    pub embed_dim: usize,
    /// Number of learned graphs `M`: either 1 (shared) or `blocks`.
    pub graphs: usize,
    pub dilations: Vec<usize>,
    pub dropout: f64,
    pub use_tlc: bool,
    pub adjacency: AdjacencyMode,
    pub num_classes: usize,
    /// Required when `adjacency == FixedCorrelation`.
    #[serde(skip)]
    pub fixed_adjacency: Option<Tensor>,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            nodes: 116,
            in_channels: 1,
            blocks: 3,
            filters: 10,
            kernel_size: 3,
            embed_dim: 10,
            graphs: 3,
            dilations: vec![1, 2, 4],
            dropout: 0.3,
            use_tlc: true,
            adjacency: AdjacencyMode::AdaptiveDirected,
            num_classes: 2,
            fixed_adjacency: None,
        }
    }
}

/// Doubling dilation schedule `1, 2, 4, ...`.
pub fn doubling_dilations(blocks: usize) -> Vec<usize> {
    (0..blocks).map(|k| 1usize << k).collect()
}

impl ModelConfig {
    /// Default architecture for `nodes` graph nodes.
    pub fn for_nodes(nodes: usize) -> Self {
        ModelConfig { nodes, ..Default::default() }
    }

    /// Sets `K`, resetting the dilation schedule to doubling and `M` to `K`
    /// unless a single shared graph was requested.
    pub fn with_blocks(mut self, blocks: usize) -> Self {
        let shared = self.graphs == 1 && self.blocks != 1;
        self.blocks = blocks;
        self.dilations = doubling_dilations(blocks);
        self.graphs = if shared { 1 } else { blocks };
        self
    }

    pub fn has_factors(&self) -> bool {
        self.adjacency != AdjacencyMode::FixedCorrelation
    }

    /// Index of the graph used by block `k`.
    pub fn graph_for_block(&self, k: usize) -> usize {
        if self.graphs == 1 {
            0
        } else {
            k
        }
    }

    /// Channels entering the first learned layer.
    pub fn input_width(&self) -> usize {
        if self.use_tlc {
            3
        } else {
            self.in_channels
        }
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.nodes < 2 {
            return fail(format!("need at least 2 nodes, got {}", self.nodes));
        }
        if self.in_channels < 1 || self.blocks < 1 || self.filters < 1 || self.embed_dim < 1 {
            return fail("channels, blocks, filters and embedding width must be positive".into());
        }
        if self.kernel_size.is_multiple_of(2) {
            return fail(format!("kernel size must be odd, got {}", self.kernel_size));
        }
        if self.graphs != 1 && self.graphs != self.blocks {
            return fail(format!("graph count must be 1 or {} (blocks), got {}", self.blocks, self.graphs));
        }
        if self.dilations.len() != self.blocks {
            return fail(format!("dilation schedule has {} entries for {} blocks", self.dilations.len(), self.blocks));
        }
        if self.dilations.iter().any(|&d| d < 1) {
            return fail("dilations must be at least 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return fail(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        if self.num_classes < 2 {
            return fail(format!("need at least 2 classes, got {}", self.num_classes));
        }
        if self.use_tlc && self.in_channels != 1 {
            return fail(format!(
                "temporal lag correction needs a single-channel signal, got {} channels",
                self.in_channels
            ));
        }
        if let Some(adj) = &self.fixed_adjacency {
            if adj.shape() != [self.nodes, self.nodes] {
                return fail(format!(
                    "fixed adjacency has shape {:?}, expected [{n}, {n}]",
                    adj.shape(),
                    n = self.nodes
                ));
            }
        }
        Ok(())
    }
}

impl ModelConfig {
    /// [`ModelConfig::validate`] plus agreement with a dataset's node and
    /// channel counts.
    pub fn validate_shape(&self, nodes: usize, channels: usize) -> Result<()> {
        self.validate()?;
        if nodes != self.nodes {
            return Err(Error::Dimension(format!("dataset has {nodes} nodes, model expects {}", self.nodes)));
        }
        if channels != self.in_channels {
            return Err(Error::Dimension(format!(
                "dataset has {channels} channels, model expects {}",
                self.in_channels
            )));
        }
        Ok(())
    }
}

/// The model and its ablations.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Everything on: TLC, `M = K` directed graphs.
    Full,
    /// No temporal lag correction.
    NoTlc,
    /// One graph shared by all blocks.
    SingleGraph,
    /// Symmetric scores, `E_t = E_sᵀ`.
    Undirected,
    /// Adjacency fixed to the mean training correlation.
    Correlation,
}

impl Variant {
    pub const ALL: [Variant; 5] =
        [Variant::Full, Variant::NoTlc, Variant::SingleGraph, Variant::Undirected, Variant::Correlation];

    pub fn name(self) -> &'static str {
        match self {
            Variant::Full => "dast-gcn",
            Variant::NoTlc => "dast-gcn_tlc",
            Variant::SingleGraph => "dast-gcn_m1",
            Variant::Undirected => "dast-gcn_undir",
            Variant::Correlation => "dast-gcn_corr",
        }
    }

    /// Applies the ablation to a base configuration.
    pub fn apply(self, base: &ModelConfig) -> ModelConfig {
        let mut c = base.clone();
        match self {
            Variant::Full => {}
            Variant::NoTlc => c.use_tlc = false,
            Variant::SingleGraph => c.graphs = 1,
            Variant::Undirected => c.adjacency = AdjacencyMode::AdaptiveUndirected,
            Variant::Correlation => c.adjacency = AdjacencyMode::FixedCorrelation,
        }
        c
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown model variant '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        ModelConfig::default().validate().unwrap();
    }

    #[test]
    fn rejects_bad_graph_count_and_even_kernel() {
        let c = ModelConfig { graphs: 2, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ModelConfig { kernel_size: 4, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ModelConfig { dropout: 1.0, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
        let c = ModelConfig { in_channels: 2, ..Default::default() };
        assert!(matches!(c.validate(), Err(Error::Config(_))));
    }

    #[test]
    fn variants_round_trip_names() {
        for v in Variant::ALL {
            assert_eq!(v.name().parse::<Variant>().unwrap(), v);
        }
        let m1 = Variant::SingleGraph.apply(&ModelConfig::default());
        assert_eq!(m1.graphs, 1);
        m1.validate().unwrap();
    }

    #[test]
    fn with_blocks_keeps_shared_graph() {
        let c = ModelConfig { graphs: 1, ..Default::default() }.with_blocks(4);
        assert_eq!(c.graphs, 1);
        assert_eq!(c.dilations, vec![1, 2, 4, 8]);
        let c = ModelConfig::default().with_blocks(2);
        assert_eq!(c.graphs, 2);
    }
}
