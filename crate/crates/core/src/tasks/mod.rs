//! Character vocabulary and synthetic task generators.

pub mod corpus;
pub mod generate;
pub mod metrics;
pub mod vocab;

pub use corpus::{decode_corpus, encode_corpus, gen_pretrain_corpus};
pub use generate::{gen_task_examples, solve, Split, TaskKind, TaskSampler, TaskSpec};
pub use metrics::{exact_match, exact_match_mean};
pub use vocab::{build_vocab, Vocab};
