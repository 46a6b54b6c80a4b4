//! Loss, optimizer, training loop, evaluation, prediction, and checkpoint
//! serialization.

pub mod adam;
pub mod checkpoint;
pub mod config;
pub mod history;
pub mod loss;
pub mod trainer;

pub use adam::{adam_step, AdamConfig, AdamOptimizer, AdamSnapshot, AdamState};
pub use checkpoint::{load_checkpoint, save_checkpoint, Checkpoint, CHECKPOINT_FORMAT_VERSION};
pub use config::{BackboneMode, BnTrainMode, TrainConfig};
pub use history::{fmt_sig6, EpochRow, History};
pub use loss::sparse_categorical_crossentropy;
pub use trainer::{argmax_row, evaluate, predict, train_model, Evaluation, TrainOutput};
