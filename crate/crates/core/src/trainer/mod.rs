//! Constituent models: a three-layer MLP classifier over duration classes,
//! trained per shard with slice checkpoints.

mod checkpoint;
mod mlp;
mod smoothing;
mod train;

pub use checkpoint::{
    checkpoint_file_name, checkpoint_path, parse_checkpoint_name, Checkpoint, FORMAT_VERSION, MAGIC,
};
pub use mlp::{init_mlp, init_mlp_with, logits, loss_and_grad, predict_proba, MlpParams, Workspace};
pub use smoothing::{smooth_labels, smoothing_table};
pub use train::{shard_rng, train_shard, ShardTraining, TrainSample, TrainingConfig};
