//! Training: L1 loss over recurrent clip rollouts, Adam with a stepwise
//! halving schedule, validation and resumable checkpoints.

mod config;
mod grad;
mod trainer;

pub use config::{ModelSection, TrainConfig};
pub use grad::{batch_gradients, clip_loss, l1_loss, train_clip};
pub use trainer::{
    fit, load_split, metrics_csv, parse_metrics_csv, validation_psnr, MetricRow, TrainOutcome,
    Trainer, METRICS_HEADER,
};
