//! Forward pass of the decoder-only transformer on an autodiff [`Graph`].

use super::config::Activation;
use super::mask::AttentionMask;
use super::params::ModelParams;
use crate::error::{Error, Result};
use crate::numeric::{Graph, NodeId, Scalar};

/// Rows `start..start + len` of a stacked batch and the mask they attend under.
#[derive(Debug, Clone, Copy)]
pub struct Segment<'m> {
    pub start: usize,
    pub len: usize,
    pub mask: &'m AttentionMask,
}

/// Model parameters registered as leaves of one graph.
pub struct BoundModel<'p, T: Scalar> {
    params: &'p ModelParams<T>,
    leaves: Vec<NodeId>,
}

impl<'p, T: Scalar> BoundModel<'p, T> {
    pub fn new(params: &'p ModelParams<T>, g: &mut Graph<'p, T>) -> Self {
        let leaves = params.tensors().iter().map(|t| g.leaf(t)).collect();
        Self { params, leaves }
    }

    pub fn params(&self) -> &'p ModelParams<T> {
        self.params
    }

    pub fn leaf(&self, index: usize) -> NodeId {
        self.leaves[index]
    }

    /// Row `k` is `token_embedding[tokens[k]] + position_embedding[k]`.
    pub fn embed(&self, g: &mut Graph<'p, T>, tokens: &[usize]) -> Result<NodeId> {
        self.embed_batch(g, &[tokens])
    }

    /// Embeddings of several sequences stacked row-wise; positions restart per sequence.
    pub fn embed_batch(&self, g: &mut Graph<'p, T>, seqs: &[&[usize]]) -> Result<NodeId> {
        let cfg = self.params.config();
        if seqs.is_empty() {
            return Err(Error::Empty("sequence batch"));
        }
        let mut ids = Vec::new();
        let mut positions = Vec::new();
        for tokens in seqs {
            if tokens.is_empty() {
                return Err(Error::Empty("token sequence"));
            }
            if let Some(&id) = tokens.iter().find(|&&t| t >= cfg.vocab_size) {
                return Err(Error::Vocab {
                    id,
                    vocab_size: cfg.vocab_size,
                });
            }
            if tokens.len() > cfg.max_positions {
                return Err(Error::Length {
                    len: tokens.len(),
                    max: cfg.max_positions,
                });
            }
            ids.extend_from_slice(tokens);
            positions.extend(0..tokens.len());
        }
        let layout = self.params.layout();
        let tok = g.gather(self.leaf(layout.token_embedding), &ids)?;
        let pos = g.gather(self.leaf(layout.position_embedding), &positions)?;
        g.add(tok, pos)
    }

    /// Attention probabilities of one head: `softmax(q kᵀ / sqrt(d_attn))` under `mask`.
    pub fn attention_weights(
        &self,
        g: &mut Graph<'p, T>,
        x: NodeId,
        layer: usize,
        head: usize,
        mask: &AttentionMask,
    ) -> Result<NodeId> {
        let h = self.head(layer, head)?;
        let q = g.matmul_t(x, false, self.leaf(h.query), true)?;
        let k = g.matmul_t(x, false, self.leaf(h.key), true)?;
        self.scaled_softmax(g, q, k, mask)
    }

    fn scaled_softmax(&self, g: &mut Graph<'p, T>, q: NodeId, k: NodeId, mask: &AttentionMask) -> Result<NodeId> {
        let scores = g.matmul_t(q, false, k, true)?;
        let inv_sqrt = T::from_usize(self.params.config().d_attn).unwrap().sqrt().recip();
        let scores = g.scale(scores, inv_sqrt)?;
        g.softmax_rows(scores, Some(mask))
    }

    fn head(&self, layer: usize, head: usize) -> Result<super::params::HeadIndex> {
        let layers = &self.params.layout().layers;
        let l = layers.get(layer).ok_or(Error::Index {
            index: layer,
            extent: layers.len(),
        })?;
        l.heads.get(head).copied().ok_or(Error::Index {
            index: head,
            extent: l.heads.len(),
        })
    }

    /// `a = LN1(x + Σ_h softmax(...) (x W_valueᵀ) W_out)` for every row.
    pub fn attention_block(
        &self,
        g: &mut Graph<'p, T>,
        x: NodeId,
        layer: usize,
        mask: &AttentionMask,
    ) -> Result<NodeId> {
        let k = g.shape(x)[0];
        self.attention_block_batch(g, x, layer, &[Segment { start: 0, len: k, mask }])
    }

    /// Attention over stacked sequences; each segment attends only within itself.
    ///
    /// The per-head projections run as one matmul against the stacked weights.
    pub fn attention_block_batch(
        &self,
        g: &mut Graph<'p, T>,
        x: NodeId,
        layer: usize,
        segments: &[Segment<'_>],
    ) -> Result<NodeId> {
        let rows = g.shape(x)[0];
        let mut expected = 0;
        for s in segments {
            if s.start != expected || s.mask.rows() != s.len || s.mask.cols() != s.len {
                return Err(Error::Dimension {
                    op: "attention_block",
                    detail: format!("mask {}x{} for segment of {} rows at {}", s.mask.rows(), s.mask.cols(), s.len, s.start),
                });
            }
            expected += s.len;
        }
        if expected != rows {
            return Err(Error::Dimension {
                op: "attention_block",
                detail: format!("segments cover {expected} of {rows} rows"),
            });
        }
        let cfg = self.params.config();
        let (nh, da) = (cfg.n_heads, cfg.d_attn);
        let l = self.params.layout().layers.get(layer).ok_or(Error::Index {
            index: layer,
            extent: cfg.n_layers,
        })?;
        let stacked: Vec<NodeId> = (l.heads.iter().map(|h| h.query))
            .chain(l.heads.iter().map(|h| h.key))
            .chain(l.heads.iter().map(|h| h.value))
            .map(|i| self.leaf(i))
            .collect();
        let w_qkv = g.concat_rows(&stacked)?;
        let qkv = g.matmul_t(x, false, w_qkv, true)?;
        let mut per_segment = Vec::with_capacity(segments.len());
        for s in segments {
            let mut heads = Vec::with_capacity(nh);
            for h in 0..nh {
                let q = g.block(qkv, s.start, h * da, s.len, da)?;
                let k = g.block(qkv, s.start, (nh + h) * da, s.len, da)?;
                let v = g.block(qkv, s.start, (2 * nh + h) * da, s.len, da)?;
                let w = self.scaled_softmax(g, q, k, s.mask)?;
                heads.push(g.matmul(w, v)?);
            }
            per_segment.push(g.concat_cols(&heads)?);
        }
        let mixed = g.concat_rows(&per_segment)?;
        let outs: Vec<NodeId> = l.heads.iter().map(|h| self.leaf(h.out)).collect();
        let w_out = g.concat_rows(&outs)?;
        let attn = g.matmul(mixed, w_out)?;
        let residual = g.add(x, attn)?;
        g.layer_norm(residual, self.leaf(l.ln1_gamma), self.leaf(l.ln1_beta), cfg.ln_eps)
    }

    /// `v' = LN2(FF(a) + a)` applied row by row.
    pub fn feedforward_block(&self, g: &mut Graph<'p, T>, a: NodeId, layer: usize) -> Result<NodeId> {
        let l = self.params.layout().layers.get(layer).ok_or(Error::Index {
            index: layer,
            extent: self.params.config().n_layers,
        })?;
        let hidden = g.matmul(a, self.leaf(l.ff_w_in))?;
        let hidden = g.add_bias(hidden, self.leaf(l.ff_b_in))?;
        let hidden = match self.params.config().activation {
            Activation::Gelu => g.gelu(hidden)?,
            Activation::Relu => g.relu(hidden)?,
        };
        let out = g.matmul(hidden, self.leaf(l.ff_w_out))?;
        let out = g.add_bias(out, self.leaf(l.ff_b_out))?;
        let residual = g.add(out, a)?;
        g.layer_norm(
            residual,
            self.leaf(l.ln2_gamma),
            self.leaf(l.ln2_beta),
            self.params.config().ln_eps,
        )
    }

    pub fn unembed(&self, g: &mut Graph<'p, T>, x: NodeId) -> Result<NodeId> {
        let layout = self.params.layout();
        match layout.unembedding {
            Some(u) => g.matmul(x, self.leaf(u)),
            None => g.matmul_t(x, false, self.leaf(layout.token_embedding), true),
        }
    }

    /// Logits `[K, |V|]`; row `k` scores the token at position `k + 1`.
    pub fn forward(&self, g: &mut Graph<'p, T>, tokens: &[usize], mask: &AttentionMask) -> Result<NodeId> {
        self.forward_batch(g, &[(tokens, mask)])
    }

    /// Logits of several sequences stacked row-wise, `[Σ K_i, |V|]`.
    pub fn forward_batch(&self, g: &mut Graph<'p, T>, batch: &[(&[usize], &AttentionMask)]) -> Result<NodeId> {
        let mut segments = Vec::with_capacity(batch.len());
        let mut start = 0;
        for &(tokens, mask) in batch {
            if mask.rows() != tokens.len() || mask.cols() != tokens.len() {
                return Err(Error::Dimension {
                    op: "forward",
                    detail: format!("mask {}x{} for {} tokens", mask.rows(), mask.cols(), tokens.len()),
                });
            }
            segments.push(Segment {
                start,
                len: tokens.len(),
                mask,
            });
            start += tokens.len();
        }
        let seqs: Vec<&[usize]> = batch.iter().map(|b| b.0).collect();
        let mut x = self.embed_batch(g, &seqs)?;
        for layer in 0..self.params.config().n_layers {
            x = self.attention_block_batch(g, x, layer, &segments)?;
            x = self.feedforward_block(g, x, layer)?;
        }
        self.unembed(g, x)
    }

    /// Removes the accumulated leaf gradients, one buffer per parameter tensor.
    pub fn take_grads(&self, g: &mut Graph<'p, T>) -> Vec<Vec<T>> {
        self.leaves
            .iter()
            .zip(self.params.tensors())
            .map(|(&id, t)| g.take_grad(id).unwrap_or_else(|| vec![T::zero(); t.len()]))
            .collect()
    }
}

impl<T: Scalar> ModelParams<T> {
    /// Evaluates logits `[K, |V|]` without keeping the graph.
    pub fn logits(&self, tokens: &[usize], mask: &AttentionMask) -> Result<Vec<T>> {
        let mut g = Graph::new();
        let model = BoundModel::new(self, &mut g);
        let out = model.forward(&mut g, tokens, mask)?;
        Ok(g.value(out).to_vec())
    }
}
