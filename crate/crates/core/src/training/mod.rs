//! AdamW, warmup/cosine schedules, the joint trainer, checkpoints and
//! evaluation.

mod adamw;
mod checkpoint;
mod metrics;
mod model;
mod schedule;
mod trainer;

pub use adamw::{adamw_step, AdamW, Moments, BETA1, BETA2, EPS};
pub use checkpoint::{
    Checkpoint, CheckpointHeader, RngState, TensorEntry, CHECKPOINT_FORMAT, CHECKPOINT_VERSION,
};
pub use metrics::{
    regression_metrics, EpochMetrics, MetricsLog, Predictions, TestMetrics, METRICS_HEADER,
};
pub use model::{Batch, Forward, ModelBundle, ModelConfig, Normalizer};
pub use schedule::{lr_at, LrSchedule, MIN_LR, WARMUP_EPOCHS};
pub use trainer::{
    evaluate, fit, initialize_model, metrics_from_predictions, predict, pretrain_backbone,
    train_joint, Init, Objective, TrainConfig, TrainOutcome,
};
