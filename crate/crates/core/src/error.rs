use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch in {op}: {detail}")]
    Dimension { op: &'static str, detail: String },

    #[error("attention mask row {row} has no allowed key")]
    DegenerateMask { row: usize },

    #[error("index {index} out of range for extent {extent}")]
    Index { index: usize, extent: usize },

    #[error("expected a scalar root, got shape {shape:?}")]
    Rank { shape: Vec<usize> },

    #[error("non-finite value produced by {op} (node {node}): {diagnostics}")]
    NonFinite {
        op: &'static str,
        node: usize,
        diagnostics: String,
    },

    #[error("token id {id} outside vocabulary of size {vocab_size}")]
    Vocab { id: usize, vocab_size: usize },

    #[error("symbol {0:?} is not in the vocabulary")]
    UnknownSymbol(String),

    #[error("sequence length {len} exceeds max_positions {max}")]
    Length { len: usize, max: usize },

    #[error("empty input: {0}")]
    Empty(&'static str),

    #[error("value out of range: {0}")]
    Range(String),

    #[error("input already contains the pause token at position {position}")]
    Contamination { position: usize },

    #[error("task generation failed: {0}")]
    Generation(String),

    #[error("token budget exhausted: need {needed} tokens, corpus has {available}")]
    Budget { needed: usize, available: usize },

    #[error("example {index} does not fit: length {len} exceeds max_positions {max}")]
    ExampleLength { index: usize, len: usize, max: usize },

    #[error("checkpoint format error: {0}")]
    Format(String),

    #[error("checkpoint incompatible with model config: {0}")]
    Compatibility(String),

    #[error("checkpoint corrupted: {0}")]
    Corruption(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("usage error: {0}")]
    Usage(String),

    #[error("missing checkpoint {path}; create it with `{hint}`")]
    MissingCheckpoint { path: PathBuf, hint: String },

    #[error("misuse: {0}")]
    Misuse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
