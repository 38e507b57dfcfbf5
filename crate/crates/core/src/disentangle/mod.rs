//! Residual projectors, the decoupled contrastive objective, and training.

mod checkpoint;
mod loss;
mod model;
mod optim;
mod resmlp;
mod train;

pub use checkpoint::{load_checkpoint, read_checkpoint_metadata, save_checkpoint, CheckpointMetadata};
pub use loss::{contrastive_loss, contrastive_loss_symmetric, ContrastiveOutput};
pub use model::{DeclipModel, LossBreakdown, ModelGrads, ModelOptions, Projection};
pub use optim::AdamW;
pub use resmlp::{silu, silu_grad, ResMlpGrads, ResMlpParams, ResMlpTrace};
pub use train::{train, write_train_log, EpochLog, TrainConfig, TrainOutcome};

/// Hidden width of each projector.
pub const DEFAULT_HIDDEN: usize = 1024;
/// Contrastive temperature.
pub const DEFAULT_TAU: f64 = 0.07;
