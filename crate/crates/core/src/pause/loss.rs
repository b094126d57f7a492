//! Pause-aware training losses.
//!
//! Both losses are sums of per-token cross-entropy, returned together with the
//! number of summed terms so callers can normalize.

use std::fmt;
use std::str::FromStr;

use super::insert::PausedSequence;
use crate::error::{Error, Result};
use crate::model::{AttentionMask, BoundModel, ModelParams};
use crate::numeric::kernels::masked_cross_entropy;
use crate::numeric::{Graph, NodeId, Scalar};

/// A summed loss and its term count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossValue {
    pub sum: f64,
    pub terms: usize,
    /// Set when every position was ignored and the sum is an empty 0.
    pub empty: bool,
}

impl LossValue {
    pub fn mean(&self) -> f64 {
        if self.terms == 0 {
            0.0
        } else {
            self.sum / self.terms as f64
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Hash, PartialOrd, Ord)]
pub enum Placement {
    #[default]
    Append,
    Prepend,
}

impl FromStr for Placement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "append" => Ok(Self::Append),
            "prepend" => Ok(Self::Prepend),
            other => Err(Error::Config(format!("unknown placement {other:?}"))),
        }
    }
}

impl fmt::Display for Placement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Append => "append",
            Self::Prepend => "prepend",
        })
    }
}

/// A downstream example: prefix, target, and how many pauses to add where.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FinetuneExample {
    pub prefix: Vec<usize>,
    pub target: Vec<usize>,
    pub m_ft: usize,
    pub placement: Placement,
}

impl FinetuneExample {
    pub fn new(prefix: Vec<usize>, target: Vec<usize>, m_ft: usize, placement: Placement) -> Self {
        Self {
            prefix,
            target,
            m_ft,
            placement,
        }
    }

    /// Rejects examples carrying the pause id or an empty target.
    pub fn validate(&self, pause: usize) -> Result<()> {
        if let Some(position) = self.prefix.iter().chain(&self.target).position(|&t| t == pause) {
            return Err(Error::Contamination { position });
        }
        if self.target.is_empty() {
            return Err(Error::Empty("finetune target"));
        }
        Ok(())
    }

    /// Model input length: the delayed prefix plus all but the last target token.
    pub fn input_len(&self) -> usize {
        self.prefix.len() + self.m_ft + self.target.len() - 1
    }
}

/// Delayed prefix and its length `P = N + m` (the bidirectional region).
pub fn add_delay(prefix: &[usize], token: usize, m: usize, placement: Placement) -> (Vec<usize>, usize) {
    let mut out = Vec::with_capacity(prefix.len() + m);
    match placement {
        Placement::Append => {
            out.extend_from_slice(prefix);
            out.extend(std::iter::repeat_n(token, m));
        }
        Placement::Prepend => {
            out.extend(std::iter::repeat_n(token, m));
            out.extend_from_slice(prefix);
        }
    }
    let p = out.len();
    (out, p)
}

pub fn append_pauses(ex: &FinetuneExample, pause: usize) -> (Vec<usize>, usize) {
    add_delay(&ex.prefix, pause, ex.m_ft, ex.placement)
}

/// Eq.-3 style loss from precomputed logits `[K, V]`: rows in `ignore` are never read.
pub fn pause_pretrain_loss_from_logits<T: Scalar>(
    logits: &[T],
    vocab_size: usize,
    seq: &PausedSequence,
) -> Result<LossValue> {
    let targets = seq.targets();
    let terms = targets.iter().flatten().count();
    let sum = masked_cross_entropy(logits, vocab_size, &targets)?.as_f64();
    Ok(LossValue {
        sum,
        terms,
        empty: terms == 0,
    })
}

/// Builds the masked pretraining loss on `g`; returns the scalar node and term count.
pub fn pretrain_loss_node<'p, T: Scalar>(
    model: &BoundModel<'p, T>,
    g: &mut Graph<'p, T>,
    seq: &PausedSequence,
) -> Result<(NodeId, usize)> {
    pretrain_batch_loss_node(model, g, &[seq])
}

/// Summed pretraining loss of several sequences evaluated as one stacked forward pass.
pub fn pretrain_batch_loss_node<'p, T: Scalar>(
    model: &BoundModel<'p, T>,
    g: &mut Graph<'p, T>,
    seqs: &[&PausedSequence],
) -> Result<(NodeId, usize)> {
    let mut masks = Vec::with_capacity(seqs.len());
    let mut targets = Vec::new();
    for seq in seqs {
        if seq.len() < 2 {
            return Err(Error::Range(format!("sequence of length {} has no next token", seq.len())));
        }
        masks.push(AttentionMask::causal(seq.len())?);
        targets.extend(seq.targets());
    }
    let batch: Vec<(&[usize], &AttentionMask)> = seqs.iter().map(|s| &s.tokens[..]).zip(&masks).collect();
    let logits = model.forward_batch(g, &batch)?;
    let terms = targets.iter().flatten().count();
    Ok((g.cross_entropy(logits, &targets)?, terms))
}

/// Sum over non-ignored positions of next-token cross-entropy under a causal mask.
pub fn pause_pretrain_loss<T: Scalar>(params: &ModelParams<T>, seq: &PausedSequence) -> Result<LossValue> {
    let mut g = Graph::new();
    let model = BoundModel::new(params, &mut g);
    let (node, terms) = pretrain_loss_node(&model, &mut g, seq)?;
    if terms == 0 {
        log::warn!("pause_pretrain_loss: every position is ignored; loss is 0");
    }
    Ok(LossValue {
        sum: g.value(node)[0].as_f64(),
        terms,
        empty: terms == 0,
    })
}

/// Plain next-token loss over every position.
pub fn standard_pretrain_loss<T: Scalar>(params: &ModelParams<T>, tokens: &[usize]) -> Result<LossValue> {
    if tokens.len() < 2 {
        return Err(Error::Range("sequence has no next token".into()));
    }
    let mask = AttentionMask::causal(tokens.len())?;
    let logits = params.logits(tokens, &mask)?;
    let mut targets: Vec<Option<usize>> = tokens[1..].iter().map(|&t| Some(t)).collect();
    targets.push(None);
    let sum = masked_cross_entropy(&logits, params.config().vocab_size, &targets)?.as_f64();
    Ok(LossValue {
        sum,
        terms: tokens.len() - 1,
        empty: false,
    })
}

/// Input tokens, prefix length and per-row targets for a finetuning example.
pub fn finetune_layout(ex: &FinetuneExample, pause: usize) -> Result<(Vec<usize>, usize, Vec<Option<usize>>)> {
    if ex.target.is_empty() {
        return Err(Error::Empty("finetune target"));
    }
    let (mut tokens, p) = append_pauses(ex, pause);
    tokens.extend_from_slice(&ex.target[..ex.target.len() - 1]);
    let mut targets = vec![None; tokens.len()];
    for (k, &t) in ex.target.iter().enumerate() {
        targets[p - 1 + k] = Some(t);
    }
    Ok((tokens, p, targets))
}

/// Builds the finetuning loss on `g`: prefix-LM mask, loss on target tokens only.
pub fn finetune_loss_node<'p, T: Scalar>(
    model: &BoundModel<'p, T>,
    g: &mut Graph<'p, T>,
    ex: &FinetuneExample,
    pause: usize,
) -> Result<(NodeId, usize)> {
    finetune_batch_loss_node(model, g, &[ex], pause)
}

/// Summed finetuning loss of several examples evaluated as one stacked forward pass.
pub fn finetune_batch_loss_node<'p, T: Scalar>(
    model: &BoundModel<'p, T>,
    g: &mut Graph<'p, T>,
    examples: &[&FinetuneExample],
    pause: usize,
) -> Result<(NodeId, usize)> {
    let max = model.params().config().max_positions;
    let mut inputs = Vec::with_capacity(examples.len());
    let mut masks = Vec::with_capacity(examples.len());
    let mut targets = Vec::new();
    let mut terms = 0;
    for ex in examples {
        if ex.input_len() > max {
            return Err(Error::Length {
                len: ex.input_len(),
                max,
            });
        }
        let (tokens, p, rows) = finetune_layout(ex, pause)?;
        if p == 0 {
            return Err(Error::Empty("finetune prefix"));
        }
        masks.push(AttentionMask::prefix(p, tokens.len())?);
        inputs.push(tokens);
        targets.extend(rows);
        terms += ex.target.len();
    }
    let batch: Vec<(&[usize], &AttentionMask)> = inputs.iter().map(|t| &t[..]).zip(&masks).collect();
    let logits = model.forward_batch(g, &batch)?;
    Ok((g.cross_entropy(logits, &targets)?, terms))
}

/// `Σ_k CE(t_{k+1}, f([p̃, t_{1:k}]))` over the `T` target predictions.
pub fn pause_finetune_loss<T: Scalar>(
    params: &ModelParams<T>,
    ex: &FinetuneExample,
    pause: usize,
) -> Result<LossValue> {
    let mut g = Graph::new();
    let model = BoundModel::new(params, &mut g);
    let (node, terms) = finetune_loss_node(&model, &mut g, ex, pause)?;
    Ok(LossValue {
        sum: g.value(node)[0].as_f64(),
        terms,
        empty: false,
    })
}

/// Finetuning loss without any delay tokens: `[p, t_{1:T-1}]` with a prefix mask over `p`.
pub fn standard_finetune_loss<T: Scalar>(
    params: &ModelParams<T>,
    prefix: &[usize],
    target: &[usize],
) -> Result<LossValue> {
    if target.is_empty() {
        return Err(Error::Empty("finetune target"));
    }
    if prefix.is_empty() {
        return Err(Error::Empty("finetune prefix"));
    }
    let tokens: Vec<usize> = prefix.iter().chain(&target[..target.len() - 1]).copied().collect();
    if tokens.len() > params.config().max_positions {
        return Err(Error::Length {
            len: tokens.len(),
            max: params.config().max_positions,
        });
    }
    let mask = AttentionMask::prefix(prefix.len(), tokens.len())?;
    let logits = params.logits(&tokens, &mask)?;
    let mut targets = vec![None; tokens.len()];
    for (k, &t) in target.iter().enumerate() {
        targets[prefix.len() - 1 + k] = Some(t);
    }
    let sum = masked_cross_entropy(&logits, params.config().vocab_size, &targets)?.as_f64();
    Ok(LossValue {
        sum,
        terms: target.len(),
        empty: false,
    })
}
