//! The DAST-GCN network.
//!
//! Pipeline for one sample `X ∈ R^{N×T×C}`:
//! temporal lag correction (optional) → 1×1 scale-up to `f` channels →
//! `K` spatio-temporal blocks → 1×1 reduce to one channel → mean over time →
//! dropout (training only) → fully connected over nodes → softmax.
//!
//! Each block computes `x + A′·gated_tcn(x)·W + b` with a learned
//! `A′ = I + softmax_rows(relu(E_s·E_t))`.

pub mod checkpoint;
mod config;
mod gradcheck;
pub mod graph;
pub mod layers;
mod params;
mod signal;

pub use checkpoint::{load_model, save_model, Container, ContainerKind};
pub use config::{doubling_dilations, AdjacencyMode, ModelConfig, Variant};
pub use gradcheck::{model_grad_check, score_margin, MODEL_CHECK_EPS};
pub use layers::{
    adaptive_adjacency, gated_tcn_layer, gcn_layer, model_forward, predict_batch, realized_adjacencies,
    st_block_forward, temporal_lag_correction, trunk_forward,
};
pub use params::{
    collect_gradients, is_factor_name, param_count, AdjacencyFactors, Block, Dense, Factors, ModelParams, ParamCount,
    Params,
};
pub use signal::NodeSignalTensor;
