//! Pause-token pipeline: insertion, masked losses and delayed decoding.

pub mod generate;
pub mod insert;
pub mod loss;

pub use generate::{generate_with_delay, greedy_generate, pause_generate, DecodeOptions};
pub use insert::{inject_corpus, inject_window, pauses_for, random_insert, PausedSequence};
pub use loss::{
    append_pauses, finetune_batch_loss_node, finetune_loss_node, pause_finetune_loss, pause_pretrain_loss, pause_pretrain_loss_from_logits,
    pretrain_batch_loss_node, pretrain_loss_node, standard_finetune_loss, standard_pretrain_loss, FinetuneExample,
    LossValue, Placement,
};
