//! Desk-scale laboratory for pause-token training of decoder-only transformers.
//!
//! Layers, bottom-up:
//!
//! * [`numeric`]: dense tensors, reverse-mode autodiff, finite-difference checks
//! * [`model`]: post-norm decoder-only transformer with causal / prefix-LM masks
//! * [`pause`]: pause insertion, masked losses, delayed greedy decoding
//! * [`tasks`]: character vocabulary and synthetic tasks
//! * [`train`]: Adam, warmup schedule, pretraining/finetuning loops, checkpoints
//! * [`experiments`]: variant matrix, sweeps, and reports behind the CLI

pub mod error;
pub mod experiments;
pub mod model;
pub mod numeric;
pub mod pause;
pub mod tasks;
pub mod train;

pub use error::{Error, Result};
