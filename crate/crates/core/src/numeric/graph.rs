//! Tape-based reverse-mode automatic differentiation over dense tensors.
//!
//! A [`Graph`] records every operation in creation order, so the node list is
//! topologically sorted by construction. [`Graph::backward`] walks it once in
//! reverse and accumulates gradients into leaves that require them. Leaf
//! gradients accumulate across calls until [`Graph::zero_grad`].
//!
//! Leaves may borrow their data from long-lived parameter tensors, which lets
//! many per-example graphs share one set of model weights without copying.

use super::kernels;
use super::tensor::{Scalar, Tensor};
use crate::error::{Error, Result};
use crate::model::mask::AttentionMask;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Value<'p, T> {
    Owned(Vec<T>),
    Borrowed(&'p [T]),
}

impl<T> Value<'_, T> {
    fn as_slice(&self) -> &[T] {
        match self {
            Value::Owned(v) => v,
            Value::Borrowed(s) => s,
        }
    }
}

enum Op<T> {
    Leaf,
    MatMul {
        a: NodeId,
        b: NodeId,
        trans_a: bool,
        trans_b: bool,
        m: usize,
        k: usize,
        n: usize,
    },
    Add(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddBias {
        x: NodeId,
        bias: NodeId,
    },
    Scale(NodeId, T),
    /// Keeps `tanh(c (x + k x³))` from the forward pass for the backward pass.
    Gelu { x: NodeId, tanh: Vec<T> },
    Relu(NodeId),
    LayerNorm {
        x: NodeId,
        gamma: NodeId,
        beta: NodeId,
        x_hat: Vec<T>,
        rstd: Vec<T>,
    },
    SoftmaxRows(NodeId),
    Gather {
        table: NodeId,
        ids: Vec<usize>,
    },
    CrossEntropy {
        logits: NodeId,
        targets: Vec<Option<usize>>,
    },
    Sum(NodeId),
    Block {
        x: NodeId,
        row0: usize,
        col0: usize,
    },
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
}

impl<T> Op<T> {
    fn name(&self) -> &'static str {
        match self {
            Op::Leaf => "leaf",
            Op::MatMul { .. } => "matmul",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::AddBias { .. } => "add_bias",
            Op::Scale(..) => "scale",
            Op::Gelu { .. } => "gelu",
            Op::Relu(_) => "relu",
            Op::LayerNorm { .. } => "layer_norm",
            Op::SoftmaxRows(_) => "softmax_rows",
            Op::Gather { .. } => "gather",
            Op::CrossEntropy { .. } => "cross_entropy",
            Op::Sum(_) => "sum",
            Op::Block { .. } => "block",
            Op::ConcatRows(_) => "concat_rows",
            Op::ConcatCols(_) => "concat_cols",
        }
    }
}

struct Node<'p, T> {
    op: Op<T>,
    shape: Vec<usize>,
    value: Value<'p, T>,
    needs_grad: bool,
}

pub struct Graph<'p, T: Scalar> {
    nodes: Vec<Node<'p, T>>,
    leaf_grads: Vec<Option<Vec<T>>>,
}

impl<T: Scalar> Default for Graph<'_, T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p, T: Scalar> Graph<'p, T> {
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            leaf_grads: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Registers a tensor as a leaf without copying its data.
    pub fn leaf(&mut self, t: &'p Tensor<T>) -> NodeId {
        self.push_leaf(t.shape().to_vec(), Value::Borrowed(t.data()), t.requires_grad())
    }

    /// Registers owned data as a leaf.
    pub fn input(&mut self, shape: Vec<usize>, data: Vec<T>, requires_grad: bool) -> Result<NodeId> {
        let n: usize = shape.iter().product();
        if n != data.len() || shape.contains(&0) {
            return Err(Error::Dimension {
                op: "input",
                detail: format!("shape {shape:?} with {} elements", data.len()),
            });
        }
        Ok(self.push_leaf(shape, Value::Owned(data), requires_grad))
    }

    fn push_leaf(&mut self, shape: Vec<usize>, value: Value<'p, T>, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op: Op::Leaf,
            shape,
            value,
            needs_grad: requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    pub fn value(&self, id: NodeId) -> &[T] {
        self.nodes[id.0].value.as_slice()
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    /// Accumulated gradient of a leaf, if backward reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[T]> {
        self.leaf_grads.get(id.0).and_then(|g| g.as_deref())
    }

    pub fn take_grad(&mut self, id: NodeId) -> Option<Vec<T>> {
        self.leaf_grads.get_mut(id.0).and_then(Option::take)
    }

    pub fn zero_grad(&mut self) {
        for g in self.leaf_grads.iter_mut().flatten() {
            g.iter_mut().for_each(|v| *v = T::zero());
        }
    }

    fn push(&mut self, op: Op<T>, shape: Vec<usize>, data: Vec<T>, inputs: &[NodeId]) -> Result<NodeId> {
        let id = self.nodes.len();
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            let max_in = inputs
                .iter()
                .flat_map(|i| self.value(*i).iter())
                .fold(0.0f64, |m, v| m.max(v.as_f64().abs()));
            return Err(Error::NonFinite {
                op: op.name(),
                node: id,
                diagnostics: format!(
                    "element {pos} of shape {shape:?} is {:?}; max |input| = {max_in:e}",
                    data[pos]
                ),
            });
        }
        let needs_grad = inputs.iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            op,
            shape,
            value: Value::Owned(data),
            needs_grad,
        });
        Ok(NodeId(id))
    }

    fn matrix_dims(&self, id: NodeId, op: &'static str) -> Result<(usize, usize)> {
        match self.shape(id) {
            [r, c] => Ok((*r, *c)),
            s => Err(Error::Dimension {
                op,
                detail: format!("expected a matrix, got shape {s:?}"),
            }),
        }
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.matmul_t(a, false, b, false)
    }

    /// `op(a) * op(b)` where `op` optionally transposes.
    pub fn matmul_t(&mut self, a: NodeId, trans_a: bool, b: NodeId, trans_b: bool) -> Result<NodeId> {
        let (ar, ac) = self.matrix_dims(a, "matmul")?;
        let (br, bc) = self.matrix_dims(b, "matmul")?;
        let (m, k) = if trans_a { (ac, ar) } else { (ar, ac) };
        let (k2, n) = if trans_b { (bc, br) } else { (br, bc) };
        if k != k2 {
            return Err(Error::Dimension {
                op: "matmul",
                detail: format!("inner extents differ: {m}x{k} times {k2}x{n}"),
            });
        }
        let mut out = vec![T::zero(); m * n];
        T::gemm(m, k, n, self.value(a), trans_a, self.value(b), trans_b, T::zero(), &mut out);
        self.push(
            Op::MatMul { a, b, trans_a, trans_b, m, k, n },
            vec![m, n],
            out,
            &[a, b],
        )
    }

    fn same_shape(&self, a: NodeId, b: NodeId, op: &'static str) -> Result<()> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dimension {
                op,
                detail: format!("{:?} vs {:?}", self.shape(a), self.shape(b)),
            });
        }
        Ok(())
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "add")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x + y).collect();
        self.push(Op::Add(a, b), self.shape(a).to_vec(), out, &[a, b])
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.same_shape(a, b, "mul")?;
        let out = self.value(a).iter().zip(self.value(b)).map(|(&x, &y)| x * y).collect();
        self.push(Op::Mul(a, b), self.shape(a).to_vec(), out, &[a, b])
    }

    /// Adds a length-`n` bias to every row of an `m x n` matrix.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (_, n) = self.matrix_dims(x, "add_bias")?;
        if self.shape(bias) != [n] {
            return Err(Error::Dimension {
                op: "add_bias",
                detail: format!("bias {:?} for rows of width {n}", self.shape(bias)),
            });
        }
        let b = self.value(bias);
        let out = self
            .value(x)
            .chunks(n)
            .flat_map(|row| row.iter().zip(b).map(|(&v, &bb)| v + bb))
            .collect();
        self.push(Op::AddBias { x, bias }, self.shape(x).to_vec(), out, &[x, bias])
    }

    pub fn scale(&mut self, x: NodeId, factor: T) -> Result<NodeId> {
        let out = self.value(x).iter().map(|&v| v * factor).collect();
        self.push(Op::Scale(x, factor), self.shape(x).to_vec(), out, &[x])
    }

    pub fn gelu(&mut self, x: NodeId) -> Result<NodeId> {
        let xs = self.value(x);
        let tanh: Vec<T> = xs.iter().map(|&v| kernels::gelu_tanh(v)).collect();
        let out = xs.iter().zip(&tanh).map(|(&v, &t)| kernels::gelu_from_tanh(v, t)).collect();
        self.push(Op::Gelu { x, tanh }, self.shape(x).to_vec(), out, &[x])
    }

    pub fn relu(&mut self, x: NodeId) -> Result<NodeId> {
        let out = self.value(x).iter().map(|&v| v.max(T::zero())).collect();
        self.push(Op::Relu(x), self.shape(x).to_vec(), out, &[x])
    }

    /// Normalizes over the last extent, then applies `gamma * x_hat + beta`.
    pub fn layer_norm(&mut self, x: NodeId, gamma: NodeId, beta: NodeId, eps: f64) -> Result<NodeId> {
        let d = *self.shape(x).last().unwrap_or(&0);
        if self.shape(gamma) != [d] || self.shape(beta) != [d] {
            return Err(Error::Dimension {
                op: "layer_norm",
                detail: format!(
                    "last extent {d}, gamma {:?}, beta {:?}",
                    self.shape(gamma),
                    self.shape(beta)
                ),
            });
        }
        let mut out = vec![T::zero(); self.value(x).len()];
        let (x_hat, rstd) = kernels::layer_norm(
            self.value(x),
            d,
            self.value(gamma),
            self.value(beta),
            T::from_f64_lossy(eps),
            &mut out,
        );
        self.push(
            Op::LayerNorm { x, gamma, beta, x_hat, rstd },
            self.shape(x).to_vec(),
            out,
            &[x, gamma, beta],
        )
    }

    /// Row-wise softmax; disallowed entries are exactly zero.
    pub fn softmax_rows(&mut self, x: NodeId, mask: Option<&AttentionMask>) -> Result<NodeId> {
        let (r, c) = self.matrix_dims(x, "softmax_rows")?;
        let mut out = vec![T::zero(); r * c];
        kernels::softmax_rows(self.value(x), r, c, mask, &mut out)?;
        self.push(Op::SoftmaxRows(x), vec![r, c], out, &[x])
    }

    /// Selects rows of `table` (an embedding lookup).
    pub fn gather(&mut self, table: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (rows, d) = self.matrix_dims(table, "gather")?;
        if ids.is_empty() {
            return Err(Error::Empty("gather ids"));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(Error::Index { index: bad, extent: rows });
        }
        let t = self.value(table);
        let out = ids.iter().flat_map(|&i| t[i * d..(i + 1) * d].iter().copied()).collect();
        self.push(
            Op::Gather { table, ids: ids.to_vec() },
            vec![ids.len(), d],
            out,
            &[table],
        )
    }

    /// Summed cross-entropy of the rows carrying a target; a scalar node.
    ///
    /// Accepts a single logit vector `[V]` or a matrix `[K, V]`.
    pub fn cross_entropy(&mut self, logits: NodeId, targets: &[Option<usize>]) -> Result<NodeId> {
        let cols = *self.shape(logits).last().unwrap_or(&0);
        let loss = kernels::masked_cross_entropy(self.value(logits), cols, targets)?;
        self.push(
            Op::CrossEntropy { logits, targets: targets.to_vec() },
            vec![1],
            vec![loss],
            &[logits],
        )
    }

    pub fn sum(&mut self, x: NodeId) -> Result<NodeId> {
        let s = self.value(x).iter().fold(T::zero(), |a, &v| a + v);
        self.push(Op::Sum(x), vec![1], vec![s], &[x])
    }

    /// The `rows x cols` sub-matrix starting at `(row0, col0)`.
    pub fn block(&mut self, x: NodeId, row0: usize, col0: usize, rows: usize, cols: usize) -> Result<NodeId> {
        let (r, c) = self.matrix_dims(x, "block")?;
        if rows == 0 || cols == 0 || row0 + rows > r || col0 + cols > c {
            return Err(Error::Dimension {
                op: "block",
                detail: format!("{rows}x{cols} at ({row0}, {col0}) of {r}x{c}"),
            });
        }
        let v = self.value(x);
        let mut out = Vec::with_capacity(rows * cols);
        for i in row0..row0 + rows {
            out.extend_from_slice(&v[i * c + col0..i * c + col0 + cols]);
        }
        self.push(Op::Block { x, row0, col0 }, vec![rows, cols], out, &[x])
    }

    /// Stacks matrices of equal width vertically.
    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Empty("concat_rows parts"));
        }
        let (_, c) = self.matrix_dims(parts[0], "concat_rows")?;
        let mut rows = 0;
        for &p in parts {
            let (r, pc) = self.matrix_dims(p, "concat_rows")?;
            if pc != c {
                return Err(Error::Dimension {
                    op: "concat_rows",
                    detail: format!("widths {c} and {pc}"),
                });
            }
            rows += r;
        }
        let mut out = Vec::with_capacity(rows * c);
        for &p in parts {
            out.extend_from_slice(self.value(p));
        }
        self.push(Op::ConcatRows(parts.to_vec()), vec![rows, c], out, parts)
    }

    /// Places matrices of equal height side by side.
    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::Empty("concat_cols parts"));
        }
        let (r, _) = self.matrix_dims(parts[0], "concat_cols")?;
        let mut widths = Vec::with_capacity(parts.len());
        for &p in parts {
            let (pr, pc) = self.matrix_dims(p, "concat_cols")?;
            if pr != r {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    detail: format!("heights {r} and {pr}"),
                });
            }
            widths.push(pc);
        }
        let c: usize = widths.iter().sum();
        let mut out = Vec::with_capacity(r * c);
        for i in 0..r {
            for (&p, &w) in parts.iter().zip(&widths) {
                out.extend_from_slice(&self.value(p)[i * w..(i + 1) * w]);
            }
        }
        self.push(Op::ConcatCols(parts.to_vec()), vec![r, c], out, parts)
    }

    /// Propagates d(root)/d(node) to every leaf that requires a gradient.
    ///
    /// Leaves reachable only through unused paths end with a zero gradient.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        if self.nodes[root.0].value.as_slice().len() != 1 {
            return Err(Error::Rank {
                shape: self.shape(root).to_vec(),
            });
        }
        let n = root.0 + 1;
        if self.leaf_grads.len() < self.nodes.len() {
            self.leaf_grads.resize_with(self.nodes.len(), || None);
        }
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) && self.nodes[i].needs_grad && self.leaf_grads[i].is_none() {
                self.leaf_grads[i] = Some(vec![T::zero(); self.value(NodeId(i)).len()]);
            }
        }
        let mut grads: Vec<Option<Vec<T>>> = (0..n).map(|_| None).collect();
        grads[root.0] = Some(vec![T::one()]);
        for i in (0..n).rev() {
            let Some(g) = grads[i].take() else { continue };
            if !self.nodes[i].needs_grad {
                continue;
            }
            if let Some(pos) = g.iter().position(|v| !v.is_finite()) {
                return Err(Error::NonFinite {
                    op: self.nodes[i].op.name(),
                    node: i,
                    diagnostics: format!("gradient element {pos} is {:?}", g[pos]),
                });
            }
            self.backprop_node(i, &g, &mut grads);
        }
        Ok(())
    }

    fn backprop_node(&mut self, i: usize, g: &[T], grads: &mut [Option<Vec<T>>]) {
        let nodes = &self.nodes;
        let needs = |id: NodeId| nodes[id.0].needs_grad;
        let val = |id: NodeId| nodes[id.0].value.as_slice();
        macro_rules! acc {
            ($id:expr) => {
                slot(grads, $id, val($id).len())
            };
        }
        match &nodes[i].op {
            Op::Leaf => {
                let dst = self.leaf_grads[i].as_mut().expect("leaf grad allocated");
                for (d, &v) in dst.iter_mut().zip(g) {
                    *d = *d + v;
                }
            }
            &Op::MatMul { a, b, trans_a, trans_b, m, k, n } => {
                if needs(a) {
                    let da = acc!(a);
                    if trans_a {
                        T::gemm(k, n, m, val(b), trans_b, g, true, T::one(), da);
                    } else {
                        T::gemm(m, n, k, g, false, val(b), !trans_b, T::one(), da);
                    }
                }
                if needs(b) {
                    let db = acc!(b);
                    if trans_b {
                        T::gemm(n, m, k, g, true, val(a), trans_a, T::one(), db);
                    } else {
                        T::gemm(k, m, n, val(a), !trans_a, g, false, T::one(), db);
                    }
                }
            }
            &Op::Add(a, b) => {
                for id in [a, b] {
                    if needs(id) {
                        let d = acc!(id);
                        d.iter_mut().zip(g).for_each(|(x, &y)| *x = *x + y);
                    }
                }
            }
            &Op::Mul(a, b) => {
                if needs(a) {
                    let d = acc!(a);
                    for ((x, &y), &bv) in d.iter_mut().zip(g).zip(val(b)) {
                        *x = *x + y * bv;
                    }
                }
                if needs(b) {
                    let d = acc!(b);
                    for ((x, &y), &av) in d.iter_mut().zip(g).zip(val(a)) {
                        *x = *x + y * av;
                    }
                }
            }
            &Op::AddBias { x, bias } => {
                if needs(x) {
                    let d = acc!(x);
                    d.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b);
                }
                if needs(bias) {
                    let db = acc!(bias);
                    let n = db.len();
                    for row in g.chunks(n) {
                        db.iter_mut().zip(row).for_each(|(a, &b)| *a = *a + b);
                    }
                }
            }
            &Op::Scale(x, f) => {
                if needs(x) {
                    let d = acc!(x);
                    d.iter_mut().zip(g).for_each(|(a, &b)| *a = *a + b * f);
                }
            }
            Op::Gelu { x, tanh } => {
                let x = *x;
                if needs(x) {
                    let d = acc!(x);
                    for (((a, &b), &xv), &t) in d.iter_mut().zip(g).zip(val(x)).zip(tanh) {
                        *a = *a + b * kernels::gelu_grad_from_tanh(xv, t);
                    }
                }
            }
            &Op::Relu(x) => {
                if needs(x) {
                    let d = acc!(x);
                    for ((a, &b), &xv) in d.iter_mut().zip(g).zip(val(x)) {
                        if xv > T::zero() {
                            *a = *a + b;
                        }
                    }
                }
            }
            Op::LayerNorm { x, gamma, beta, x_hat, rstd } => {
                let (x, gamma, beta) = (*x, *gamma, *beta);
                let d = val(gamma).len();
                if needs(gamma) {
                    let dg = acc!(gamma);
                    for (row_g, row_h) in g.chunks(d).zip(x_hat.chunks(d)) {
                        for c in 0..d {
                            dg[c] = dg[c] + row_g[c] * row_h[c];
                        }
                    }
                }
                if needs(beta) {
                    let db = acc!(beta);
                    for row_g in g.chunks(d) {
                        db.iter_mut().zip(row_g).for_each(|(a, &b)| *a = *a + b);
                    }
                }
                if needs(x) {
                    let gam = val(gamma);
                    let dx = acc!(x);
                    let inv_d = T::from_usize(d).unwrap().recip();
                    for (r, &rs) in rstd.iter().enumerate() {
                        let row_g = &g[r * d..(r + 1) * d];
                        let row_h = &x_hat[r * d..(r + 1) * d];
                        let mut mean_dh = T::zero();
                        let mut mean_dh_h = T::zero();
                        for c in 0..d {
                            let dh = row_g[c] * gam[c];
                            mean_dh = mean_dh + dh;
                            mean_dh_h = mean_dh_h + dh * row_h[c];
                        }
                        mean_dh = mean_dh * inv_d;
                        mean_dh_h = mean_dh_h * inv_d;
                        for c in 0..d {
                            let dh = row_g[c] * gam[c];
                            let v = rs * (dh - mean_dh - row_h[c] * mean_dh_h);
                            dx[r * d + c] = dx[r * d + c] + v;
                        }
                    }
                }
            }
            &Op::SoftmaxRows(x) => {
                if needs(x) {
                    let y = nodes[i].value.as_slice();
                    let c = nodes[i].shape[1];
                    let dx = acc!(x);
                    for ((row_y, row_g), row_d) in y.chunks(c).zip(g.chunks(c)).zip(dx.chunks_mut(c)) {
                        let dot = row_y.iter().zip(row_g).fold(T::zero(), |a, (&p, &q)| a + p * q);
                        for j in 0..c {
                            row_d[j] = row_d[j] + row_y[j] * (row_g[j] - dot);
                        }
                    }
                }
            }
            Op::Gather { table, ids } => {
                let table = *table;
                if needs(table) {
                    let d = nodes[table.0].shape[1];
                    let dt = acc!(table);
                    for (r, &id) in ids.iter().enumerate() {
                        for c in 0..d {
                            dt[id * d + c] = dt[id * d + c] + g[r * d + c];
                        }
                    }
                }
            }
            Op::CrossEntropy { logits, targets } => {
                let logits = *logits;
                if needs(logits) {
                    let cols = *nodes[logits.0].shape.last().unwrap();
                    let lv = val(logits);
                    let dl = acc!(logits);
                    let scale = g[0];
                    for (r, t) in targets.iter().enumerate() {
                        let Some(t) = *t else { continue };
                        let row = &lv[r * cols..(r + 1) * cols];
                        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
                        let sum = row.iter().fold(T::zero(), |a, &v| a + (v - max).exp());
                        let inv = sum.recip();
                        for c in 0..cols {
                            let mut p = (row[c] - max).exp() * inv;
                            if c == t {
                                p = p - T::one();
                            }
                            dl[r * cols + c] = dl[r * cols + c] + scale * p;
                        }
                    }
                }
            }
            &Op::Sum(x) => {
                if needs(x) {
                    let d = acc!(x);
                    d.iter_mut().for_each(|a| *a = *a + g[0]);
                }
            }
            &Op::Block { x, row0, col0 } => {
                if needs(x) {
                    let (rows, cols) = (nodes[i].shape[0], nodes[i].shape[1]);
                    let c = nodes[x.0].shape[1];
                    let d = acc!(x);
                    for r in 0..rows {
                        let dst = &mut d[(row0 + r) * c + col0..(row0 + r) * c + col0 + cols];
                        dst.iter_mut().zip(&g[r * cols..(r + 1) * cols]).for_each(|(a, &b)| *a = *a + b);
                    }
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = val(p).len();
                    if needs(p) {
                        let d = acc!(p);
                        d.iter_mut().zip(&g[offset..offset + len]).for_each(|(a, &b)| *a = *a + b);
                    }
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let c = nodes[i].shape[1];
                let mut col0 = 0;
                for &p in parts {
                    let w = nodes[p.0].shape[1];
                    if needs(p) {
                        let d = acc!(p);
                        for (r, row) in d.chunks_mut(w).enumerate() {
                            let src = &g[r * c + col0..r * c + col0 + w];
                            row.iter_mut().zip(src).for_each(|(a, &b)| *a = *a + b);
                        }
                    }
                    col0 += w;
                }
            }
        }
    }
}

fn slot<T: Scalar>(grads: &mut [Option<Vec<T>>], id: NodeId, len: usize) -> &mut Vec<T> {
    grads[id.0].get_or_insert_with(|| vec![T::zero(); len])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mat(rows: &[Vec<f64>]) -> Tensor<f64> {
        Tensor::from_rows(rows).unwrap()
    }

    #[test]
    fn block_and_concat_invert_each_other() {
        let m = mat(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]);
        let mut g = Graph::new();
        let x = g.leaf(&m);
        let left = g.block(x, 0, 0, 2, 1).unwrap();
        let right = g.block(x, 0, 1, 2, 2).unwrap();
        assert_eq!(g.value(right), &[2.0, 3.0, 5.0, 6.0]);
        let back = g.concat_cols(&[left, right]).unwrap();
        assert_eq!(g.value(back), m.data());
        let top = g.block(x, 0, 0, 1, 3).unwrap();
        let bottom = g.block(x, 1, 0, 1, 3).unwrap();
        let stacked = g.concat_rows(&[bottom, top]).unwrap();
        assert_eq!(g.value(stacked), &[4.0, 5.0, 6.0, 1.0, 2.0, 3.0]);
        assert!(g.block(x, 1, 1, 2, 1).is_err());
    }

    #[test]
    fn block_and_concat_route_gradients() {
        let m = mat(&[vec![1.0, 2.0, 3.0], vec![4.0, 5.0, 6.0]]).with_requires_grad();
        let w = mat(&[vec![1.0, 10.0], vec![100.0, 1000.0]]);
        let mut g = Graph::new();
        let (x, wl) = (g.leaf(&m), g.leaf(&w));
        let b = g.block(x, 0, 1, 2, 2).unwrap();
        let c = g.concat_cols(&[b, b]).unwrap();
        let r = g.concat_rows(&[c, c]).unwrap();
        let top = g.block(r, 0, 0, 2, 2).unwrap();
        let weighted = g.mul(top, wl).unwrap();
        let s = g.sum(weighted).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(x).unwrap(), &[0.0, 1.0, 10.0, 0.0, 100.0, 1000.0]);
    }

    #[test]
    fn identity_times_matrix() {
        let i2 = mat(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let m = mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let mut g = Graph::new();
        let (a, b) = (g.leaf(&i2), g.leaf(&m));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.value(c), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn matrix_times_column() {
        let m = mat(&[vec![1.0, 2.0], vec![3.0, 4.0]]);
        let v = mat(&[vec![5.0], vec![6.0]]);
        let mut g = Graph::new();
        let (a, b) = (g.leaf(&m), g.leaf(&v));
        let c = g.matmul(a, b).unwrap();
        assert_eq!(g.shape(c), &[2, 1]);
        assert_eq!(g.value(c), &[17.0, 39.0]);
    }

    #[test]
    fn mismatched_inner_extent_is_rejected() {
        let a = Tensor::<f64>::zeros(vec![2, 3]).unwrap();
        let mut g = Graph::new();
        let (x, y) = (g.leaf(&a), g.leaf(&a));
        assert!(matches!(g.matmul(x, y), Err(Error::Dimension { .. })));
    }

    #[test]
    fn product_rule_on_scalars() {
        let x = Tensor::new(vec![1], vec![3.0f64]).unwrap().with_requires_grad();
        let y = Tensor::new(vec![1], vec![5.0f64]).unwrap().with_requires_grad();
        let mut g = Graph::new();
        let (xi, yi) = (g.leaf(&x), g.leaf(&y));
        let p = g.mul(xi, yi).unwrap();
        g.backward(p).unwrap();
        assert_eq!(g.grad(xi).unwrap(), &[5.0]);
        assert_eq!(g.grad(yi).unwrap(), &[3.0]);
    }

    #[test]
    fn unused_leaf_gets_zero_grad() {
        let x = Tensor::new(vec![1], vec![3.0f64]).unwrap().with_requires_grad();
        let unused = Tensor::new(vec![2], vec![1.0f64, 2.0]).unwrap().with_requires_grad();
        let mut g = Graph::new();
        let xi = g.leaf(&x);
        let ui = g.leaf(&unused);
        let s = g.sum(xi).unwrap();
        g.backward(s).unwrap();
        assert_eq!(g.grad(ui).unwrap(), &[0.0, 0.0]);
    }

    #[test]
    fn non_scalar_root_is_rank_error() {
        let x = Tensor::new(vec![2], vec![1.0f64, 2.0]).unwrap().with_requires_grad();
        let mut g = Graph::new();
        let xi = g.leaf(&x);
        assert!(matches!(g.backward(xi), Err(Error::Rank { .. })));
    }

    #[test]
    fn second_backward_doubles_grads() {
        let x = Tensor::new(vec![1], vec![3.0f64]).unwrap().with_requires_grad();
        let mut g = Graph::new();
        let xi = g.leaf(&x);
        let sq = g.mul(xi, xi).unwrap();
        g.backward(sq).unwrap();
        assert_eq!(g.grad(xi).unwrap(), &[6.0]);
        g.backward(sq).unwrap();
        assert_eq!(g.grad(xi).unwrap(), &[12.0]);
        g.zero_grad();
        assert_eq!(g.grad(xi).unwrap(), &[0.0]);
    }

    #[test]
    fn fully_masked_row_is_degenerate() {
        let x = Tensor::<f64>::zeros(vec![2, 2]).unwrap();
        let mask = AttentionMask::from_rows(vec![vec![true, true], vec![false, false]]);
        // from_rows refuses masks with empty rows, so build the check on the kernel.
        assert!(mask.is_err());
        let mut out = [0.0; 4];
        let bad = AttentionMask::from_rows_unchecked(vec![vec![true, true], vec![false, false]]);
        let err = kernels::softmax_rows(x.data(), 2, 2, Some(&bad), &mut out).unwrap_err();
        assert!(matches!(err, Error::DegenerateMask { row: 1 }));
    }

    #[test]
    fn constant_vector_normalizes_to_zero() {
        let x = mat(&[vec![2.5, 2.5, 2.5, 2.5]]);
        let gamma = Tensor::new(vec![4], vec![1.0; 4]).unwrap();
        let beta = Tensor::new(vec![4], vec![0.0; 4]).unwrap();
        let mut g = Graph::new();
        let (xi, gi, bi) = (g.leaf(&x), g.leaf(&gamma), g.leaf(&beta));
        let y = g.layer_norm(xi, gi, bi, 1e-5).unwrap();
        assert!(g.value(y).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_vector_is_preserved_as_eps_vanishes() {
        let x = mat(&[vec![1.0, -1.0]]);
        let gamma = Tensor::new(vec![2], vec![1.0; 2]).unwrap();
        let beta = Tensor::new(vec![2], vec![0.0; 2]).unwrap();
        let mut g = Graph::new();
        let (xi, gi, bi) = (g.leaf(&x), g.leaf(&gamma), g.leaf(&beta));
        let y = g.layer_norm(xi, gi, bi, 1e-15).unwrap();
        for (a, b) in g.value(y).iter().zip([1.0, -1.0]) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn non_finite_forward_is_reported() {
        let x = Tensor::new(vec![1], vec![f64::MAX]).unwrap();
        let mut g = Graph::new();
        let xi = g.leaf(&x);
        let err = g.scale(xi, 10.0).unwrap_err();
        assert!(matches!(err, Error::NonFinite { op: "scale", .. }));
    }
}
