//! Dynamic adaptive spatio-temporal graph convolution (DAST-GCN).
//!
//! The crate is organised bottom-up:
//!
//! * [`numerics`]: dense `f64` tensors and a define-by-run reverse-mode tape.
//! * [`model`]: the network, with temporal lag correction, gated dilated TCN,
//!   layer-wise adaptive adjacency, graph convolution and readout head.
//! * [`data`]: the on-disk sample format, manifests, correlation utilities
//!   and a synthetic generator with planted directed coupling.
//! * [`training`]: loss, Adam, warm-up cosine schedule, stratified folds,
//!   cross-validation, the linear correlation baseline and scaling runs.
//! * [`transfer`]: export of learned graph factors and re-use on a new dataset.

pub mod data;
pub mod error;
pub mod model;
pub mod numerics;
pub mod rng;
pub mod training;
pub mod transfer;

pub use error::{Error, Result};
pub use model::{AdjacencyMode, ModelConfig, ModelParams, NodeSignalTensor, Variant};
pub use numerics::{Tape, Tensor, Var};
pub use training::{Metrics, TrainConfig, TrainReport};
pub use transfer::{GraphBundle, TransferMode, TransferReport};
