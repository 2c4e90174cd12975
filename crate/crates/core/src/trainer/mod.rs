//! Episodic training: Adam with exponential learning-rate decay, a
//! proxy-only warm-up, per-epoch membership accounting and EM-based
//! re-initialisation of empty proxies.

mod adam;
mod config;
mod train;

pub use adam::{AdamState, BETA1, BETA2, EPSILON};
pub use config::{TrainConfig, TrainMode};
pub use train::{
    init_state, metrics_csv, steps_csv, train, train_epoch, train_to_dir, EpochStats, PreparedData,
    StepRow, TrainOutcome, TrainState,
};
