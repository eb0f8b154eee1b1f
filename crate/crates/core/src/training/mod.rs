//! Composite objective, optimiser, training loop and checkpoints.

mod adam;
mod checkpoint;
mod loss;
mod train;

use thiserror::Error;

use crate::coords::CoordError;
use crate::data::DataError;
use crate::kv::KvError;
use crate::models::ModelError;
use crate::tensor::TensorError;

pub use adam::{adam_step, lr_at, AdamConfig, AdamState};
pub use checkpoint::{Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION};
pub use loss::{encode_all, half_gap, loss_cross, loss_latent, loss_self, loss_total, Latents, LossVars, StepBatch};
pub use train::{
    build_step_batch, epoch_order, normalize_pairs, train, EpochSummary, NoopObserver, RunWriter, StepRecord, TrainObserver,
    TrainState, METRICS_CSV_HEADER,
};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Coord(#[from] CoordError),
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("batch: {0}")]
    Batch(String),
    #[error("parameter `{0}` has no gradient")]
    MissingGradient(String),
    #[error("optimizer: {0}")]
    Optimizer(String),
    #[error("non-finite loss at epoch {epoch}, step {step} (run seed {seed}, scale {scale})")]
    NonFiniteLoss { epoch: usize, step: usize, seed: u64, scale: f64 },
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error("checkpoint config: {0}")]
    CheckpointConfig(#[from] KvError),
    #[error("{path}: {source}")]
    Io { path: std::path::PathBuf, source: std::io::Error },
    #[error("training stopped by observer: {0}")]
    Observer(String),
}

impl From<TensorError> for TrainError {
    fn from(e: TensorError) -> Self {
        TrainError::Model(ModelError::Tensor(e))
    }
}

/// Optimisation schedule and batch construction.
#[derive(Clone, Debug, PartialEq)]
pub struct TrainingConfig {
    pub epochs: usize,
    /// Initial learning rate η.
    pub lr: f64,
    /// Per-epoch learning-rate decay γ.
    pub gamma: f64,
    pub adam: AdamConfig,
    /// Query coordinates sampled per step (k).
    pub queries_per_step: usize,
    pub steps_per_epoch: usize,
    pub seed: u64,
    pub scale_min: f64,
    pub scale_max: f64,
    /// Write a checkpoint every this many epochs (0 = only at the end).
    pub checkpoint_every: usize,
    pub use_latent_loss: bool,
}

impl Default for TrainingConfig {
    fn default() -> Self {
        Self {
            epochs: 2500,
            lr: 1e-5,
            gamma: 0.9999,
            adam: AdamConfig::default(),
            queries_per_step: 1024,
            steps_per_epoch: 100,
            seed: 0,
            scale_min: 1.0,
            scale_max: 3.0,
            checkpoint_every: 100,
            use_latent_loss: true,
        }
    }
}

impl TrainingConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let fail = |m: String| Err(TrainError::Config(m));
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return fail(format!("gamma must lie in (0, 1], got {}", self.gamma));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return fail(format!("learning rate must be positive, got {}", self.lr));
        }
        if !(self.adam.weight_decay >= 0.0) {
            return fail(format!("weight decay must be non-negative, got {}", self.adam.weight_decay));
        }
        if !(0.0..1.0).contains(&self.adam.beta1) || !(0.0..1.0).contains(&self.adam.beta2) || !(self.adam.eps > 0.0) {
            return fail(format!("bad Adam constants {:?}", self.adam));
        }
        if self.queries_per_step == 0 || self.steps_per_epoch == 0 || self.epochs == 0 {
            return fail("epochs, steps per epoch and queries per step must be at least 1".into());
        }
        if !(1.0 <= self.scale_min && self.scale_min <= self.scale_max && self.scale_max <= crate::data::MAX_SCALE) {
            return fail(format!("scale range [{}, {}] must lie within [1, 3.25]", self.scale_min, self.scale_max));
        }
        Ok(())
    }

    pub fn lr_at(&self, epoch: usize) -> f64 {
        lr_at(epoch, self.lr, self.gamma)
    }
}
