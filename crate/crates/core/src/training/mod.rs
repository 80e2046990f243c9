//! Optimisation, cross-validation, metrics, the linear baseline, ablation
//! grids and scaling curves.

mod ablation;
mod adam;
mod candidates;
pub mod checks;
mod config;
mod fit;
mod folds;
mod linear;
mod loss;
mod metrics;
mod report;
mod scaling;

pub use ablation::{ablation_grid, AblationReport};
pub use adam::{adam_step, AdamConfig, AdamState};
pub use candidates::Candidate;
pub use checks::{gradient_suite, CheckLine};
pub use config::{cosine_warmup_lr, TrainConfig};
pub use fit::{
    evaluate, fit_model, model_name, predict_classes, prepare, resolve_config, train_model, EpochLoss, FitOutcome,
};
pub use folds::{kfold_split, Fold};
pub use linear::{correlation_features, train_linear_baseline, LINEAR_NAME};
pub use loss::cross_entropy_loss;
pub use metrics::{argmax, MeanSd, Metrics};
pub use report::{FoldReport, Summary, TrainReport};
pub use scaling::{scaling_csv, scaling_experiment, stratified_subsets, ScalingRow};

pub(crate) use fit::run_fold;
