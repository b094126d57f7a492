//! Optimization: Adam, warmup schedule, training loops and checkpoints.

pub mod checkpoint;
pub mod config;
pub mod loops;
pub mod optim;

pub use checkpoint::{
    decode_checkpoint, encode_checkpoint, file_digest, load_checkpoint, load_checkpoint_for, save_checkpoint,
    Checkpoint, CheckpointHeader,
};
pub use config::{Schedule, TrainConfig};
pub use loops::{
    curve_csv, epoch_order, train_finetune, train_pretrain, write_curve, Control, CurvePoint, Observer,
    PretrainMode, PretrainOptions, TrainReport,
};
pub use optim::{adam_step, lr_schedule, OptimizerState, StepStats};
