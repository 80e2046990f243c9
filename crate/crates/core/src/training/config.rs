use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Optimisation and cross-validation settings.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_max: f64,
    pub warmup_epochs: usize,
    pub folds: usize,
    pub seed: u64,
    /// Z-score every node series before it enters a model.
    pub zscore: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig { epochs: 200, batch_size: 32, lr_max: 0.001, warmup_epochs: 10, folds: 5, seed: 0, zscore: true }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.warmup_epochs == 0 || self.warmup_epochs >= self.epochs {
            return fail(format!(
                "warm-up must satisfy 0 < warmup_epochs < epochs, got {} and {}",
                self.warmup_epochs, self.epochs
            ));
        }
        if self.batch_size == 0 {
            return fail("batch_size must be positive".into());
        }
        if !(self.lr_max > 0.0 && self.lr_max.is_finite()) {
            return fail(format!("lr_max must be positive, got {}", self.lr_max));
        }
        if self.folds < 2 {
            return fail(format!("need at least 2 folds, got {}", self.folds));
        }
        Ok(())
    }
}

/// Linear warm-up to `lr_max` over `W` epochs, then half-cosine decay.
///
/// `lr = lr_max·(e+1)/W` for `e < W`, else
/// `lr_max·½·(1 + cos(π·(e−W)/(epochs−W)))`.
pub fn cosine_warmup_lr(epoch: usize, config: &TrainConfig) -> f64 {
    let (w, total, lr) = (config.warmup_epochs, config.epochs, config.lr_max);
    if epoch < w {
        lr * ((epoch + 1) as f64 / w as f64)
    } else {
        let progress = (epoch - w) as f64 / (total - w) as f64;
        lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
    }
}
