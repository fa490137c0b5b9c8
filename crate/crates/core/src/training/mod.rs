//! Tuple sampling, the training step and loop, and the loss-weight
//! ablation runner.

mod ablation;
mod config;
mod objective;
mod optim;
mod sample;
mod trainer;

pub use ablation::{describe_samples, evaluate_model, objective_label, run_ablation, AblationReport, AblationRow};
pub use config::TrainConfig;
pub use objective::{tuple_loss_and_grad, LocalPair, LossConfig, TupleClouds, TupleObjective};
pub use optim::{adam_step, learning_rate_at, OptimizerState};
pub use sample::{eligible_anchors, sample_tuple, tuple_violations, CloudRef, Sample, TrainingTuple};
pub use trainer::{
    preprocess_train, prepare_tuple, train_loop, train_loop_with, train_step, Checkpoint, EpochRecord, PreparedTuple,
    StepLosses, TrainOutcome, TrainState,
};
