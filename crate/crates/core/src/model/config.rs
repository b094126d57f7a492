use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Activation {
    #[default]
    Gelu,
    Relu,
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "gelu" => Ok(Self::Gelu),
            "relu" => Ok(Self::Relu),
            other => Err(Error::Config(format!("unknown activation {other:?}"))),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Gelu => "gelu",
            Self::Relu => "relu",
        })
    }
}

/// Architecture of the decoder-only model.
///
/// Blocks are post-norm: `a = LN(v + attn(v))`, `v' = LN(FF(a) + a)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub n_layers: usize,
    pub n_heads: usize,
    pub d_model: usize,
    pub d_attn: usize,
    pub d_ff: usize,
    pub max_positions: usize,
    pub vocab_size: usize,
    pub activation: Activation,
    /// Reuse the token embedding as the unembedding matrix.
    pub tie_embeddings: bool,
    pub init_std: f64,
    pub ln_eps: f64,
}

impl ModelConfig {
    /// Config with `d_attn = d_model / n_heads` and the default activation/init.
    pub fn new(
        n_layers: usize,
        n_heads: usize,
        d_model: usize,
        d_ff: usize,
        max_positions: usize,
        vocab_size: usize,
    ) -> Self {
        Self {
            n_layers,
            n_heads,
            d_model,
            d_attn: d_model.checked_div(n_heads).map_or(0, |d| d.max(1)),
            d_ff,
            max_positions,
            vocab_size,
            activation: Activation::Gelu,
            tie_embeddings: false,
            init_std: 0.02,
            ln_eps: 1e-5,
        }
    }

    /// Desk-scale default architecture for a given vocabulary.
    pub fn desk_default(vocab_size: usize) -> Self {
        Self::new(4, 4, 128, 512, 512, vocab_size)
    }

    /// `n_layers` may be zero (an embedding-only model); every other extent is positive.
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("n_heads", self.n_heads),
            ("d_model", self.d_model),
            ("d_attn", self.d_attn),
            ("d_ff", self.d_ff),
            ("max_positions", self.max_positions),
            ("vocab_size", self.vocab_size),
        ];
        if let Some((name, _)) = named.iter().find(|(_, v)| *v == 0) {
            return Err(Error::Config(format!("model.{name} must be positive")));
        }
        if !(self.init_std.is_finite() && self.init_std > 0.0) {
            return Err(Error::Config("model.init_std must be positive".into()));
        }
        Ok(())
    }

    pub fn with_vocab_size(&self, vocab_size: usize) -> Self {
        Self {
            vocab_size,
            ..self.clone()
        }
    }

    /// `key = value` lines describing the architecture (stored in checkpoints).
    pub fn to_kv(&self) -> String {
        format!(
            "model.n_layers = {}\nmodel.n_heads = {}\nmodel.d_model = {}\nmodel.d_attn = {}\n\
             model.d_ff = {}\nmodel.max_positions = {}\nmodel.vocab_size = {}\n\
             model.activation = {}\nmodel.tie_embeddings = {}\nmodel.init_std = {}\nmodel.ln_eps = {}\n",
            self.n_layers,
            self.n_heads,
            self.d_model,
            self.d_attn,
            self.d_ff,
            self.max_positions,
            self.vocab_size,
            self.activation,
            self.tie_embeddings,
            self.init_std,
            self.ln_eps,
        )
    }

    /// Applies one `model.*` key; returns `false` for keys outside this namespace.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        fn parse<V: FromStr>(key: &str, value: &str) -> Result<V> {
            value
                .parse()
                .map_err(|_| Error::Config(format!("bad value {value:?} for {key}")))
        }
        match key {
            "model.n_layers" => self.n_layers = parse(key, value)?,
            "model.n_heads" => self.n_heads = parse(key, value)?,
            "model.d_model" => self.d_model = parse(key, value)?,
            "model.d_attn" => self.d_attn = parse(key, value)?,
            "model.d_ff" => self.d_ff = parse(key, value)?,
            "model.max_positions" => self.max_positions = parse(key, value)?,
            "model.vocab_size" => self.vocab_size = parse(key, value)?,
            "model.activation" => self.activation = value.parse()?,
            "model.tie_embeddings" => self.tie_embeddings = parse(key, value)?,
            "model.init_std" => self.init_std = parse(key, value)?,
            "model.ln_eps" => self.ln_eps = parse(key, value)?,
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn from_kv(text: &str) -> Result<Self> {
        let mut cfg = Self::new(0, 1, 1, 1, 1, 1);
        let mut seen = 0;
        for line in text.lines() {
            let Some((k, v)) = line.split_once('=') else { continue };
            if cfg.set(k.trim(), v.trim())? {
                seen += 1;
            }
        }
        if seen < 11 {
            return Err(Error::Format(format!("model config block has {seen} of 11 keys")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Exact parameter counts per component.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ParamCount {
    pub token_embedding: usize,
    pub position_embedding: usize,
    pub attention: usize,
    pub feedforward: usize,
    pub layer_norm: usize,
    pub unembedding: usize,
    pub total: usize,
}

pub fn count_params(cfg: &ModelConfig) -> ParamCount {
    let d = cfg.d_model;
    let token_embedding = cfg.vocab_size * d;
    let position_embedding = cfg.max_positions * d;
    let attention = cfg.n_layers * cfg.n_heads * 4 * cfg.d_attn * d;
    let feedforward = cfg.n_layers * (d * cfg.d_ff + cfg.d_ff + cfg.d_ff * d + d);
    let layer_norm = cfg.n_layers * 4 * d;
    let unembedding = if cfg.tie_embeddings { 0 } else { d * cfg.vocab_size };
    ParamCount {
        token_embedding,
        position_embedding,
        attention,
        feedforward,
        layer_norm,
        unembedding,
        total: token_embedding + position_embedding + attention + feedforward + layer_norm + unembedding,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pause_row_adds_exactly_d_per_table() {
        let cfg = ModelConfig::new(2, 2, 64, 128, 32, 40);
        let a = count_params(&cfg);
        let b = count_params(&cfg.with_vocab_size(41));
        assert_eq!(b.token_embedding - a.token_embedding, 64);
        assert_eq!(b.unembedding - a.unembedding, 64);
        assert_eq!(b.total - a.total, 128);
    }

    #[test]
    fn zero_layers_is_embeddings_only() {
        let cfg = ModelConfig::new(0, 2, 16, 32, 8, 10);
        let c = count_params(&cfg);
        assert_eq!(c.total, 10 * 16 + 8 * 16 + 16 * 10);
        assert_eq!(c.attention + c.feedforward + c.layer_norm, 0);
    }

    #[test]
    fn kv_round_trip() {
        let mut cfg = ModelConfig::desk_default(37);
        cfg.activation = Activation::Relu;
        cfg.init_std = 0.125;
        assert_eq!(ModelConfig::from_kv(&cfg.to_kv()).unwrap(), cfg);
    }
}
