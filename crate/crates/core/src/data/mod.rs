//! Sample files, manifests, normalisation, correlation and synthetic data.

pub mod csv;
pub mod format;
mod manifest;
pub mod stats;
pub mod synth;

pub use format::{read_sample, write_sample};
pub use manifest::{load_dataset, read_manifest, write_dataset, Dataset, DatasetManifest, Sample, SampleEntry};
pub use stats::{mean_corr_adjacency, pearson_matrix, upper_triangle, zscore};
pub use synth::{generate, synth_generate, Dynamics, GroundTruth, SynthOutput, SynthSpec};
