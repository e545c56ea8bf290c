//! Reverse-mode automatic differentiation on a linear tape.
//!
//! Every operation appends one node holding the forward value and the
//! provenance needed for its vector-Jacobian product. Inputs precede their
//! consumers on the tape, so walking it backwards visits each node exactly
//! once in reverse topological order. Gradients on re-used nodes accumulate
//! additively; the graph is dropped after backward.
//!
//! Parameter tensors enter as borrowed slices (`input_ref`) so a training
//! step never copies the model; per-sample inputs enter owned.

use alloc::borrow::ToOwned;
use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use super::kernels;

/// Epsilon inside layer normalization's variance square root.
pub const LAYER_NORM_EPS: f64 = 1e-5;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct TensorId(pub(crate) usize);

#[derive(Debug, Clone, PartialEq)]
pub enum TensorError {
    ShapeMismatch {
        op: &'static str,
        lhs: Vec<usize>,
        rhs: Vec<usize>,
    },
    DataLength {
        expected: usize,
        got: usize,
    },
    InvalidAxis {
        axis: usize,
        shape: Vec<usize>,
    },
    IndexOutOfRange {
        op: &'static str,
        index: usize,
        bound: usize,
    },
    NotScalar {
        shape: Vec<usize>,
    },
    NoValidTargets,
    NonFinite {
        what: String,
    },
}

impl core::fmt::Display for TensorError {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            TensorError::ShapeMismatch { op, lhs, rhs } => {
                write!(f, "{op}: shape mismatch {lhs:?} vs {rhs:?}")
            }
            TensorError::DataLength { expected, got } => {
                write!(f, "data length {got} does not match shape ({expected} elements)")
            }
            TensorError::InvalidAxis { axis, shape } => {
                write!(f, "axis {axis} invalid or empty for shape {shape:?}")
            }
            TensorError::IndexOutOfRange { op, index, bound } => {
                write!(f, "{op}: index {index} out of range (bound {bound})")
            }
            TensorError::NotScalar { shape } => {
                write!(f, "backward requires a scalar result, got shape {shape:?}")
            }
            TensorError::NoValidTargets => {
                write!(f, "cross entropy: every target position is ignored")
            }
            TensorError::NonFinite { what } => write!(f, "non-finite value in {what}"),
        }
    }
}

#[cfg(feature = "std")]
impl std::error::Error for TensorError {}

enum Data<'a> {
    Owned(Vec<f64>),
    Borrowed(&'a [f64]),
}

impl Data<'_> {
    #[inline]
    fn as_slice(&self) -> &[f64] {
        match self {
            Data::Owned(v) => v,
            Data::Borrowed(s) => s,
        }
    }
}

enum Op {
    Leaf,
    Matmul { a: TensorId, b: TensorId },
    Transpose { x: TensorId },
    Add { a: TensorId, b: TensorId },
    Sub { a: TensorId, b: TensorId },
    Mul { a: TensorId, b: TensorId },
    Scale { x: TensorId, c: f64 },
    Gelu { x: TensorId },
    Softmax { x: TensorId, axis: usize },
    LayerNorm { x: TensorId, gain: TensorId, bias: TensorId },
    Embedding { table: TensorId, ids: Vec<usize> },
    CrossEntropy {
        logits: TensorId,
        targets: Vec<Option<usize>>,
        class_weights: Option<Vec<f64>>,
    },
    SliceRows { x: TensorId, start: usize },
    SliceCols { x: TensorId, start: usize },
    ConcatRows { parts: Vec<TensorId> },
    ConcatCols { parts: Vec<TensorId> },
    MeanRows { x: TensorId },
    Sum { x: TensorId },
    Reshape { x: TensorId },
}

struct Node<'a> {
    op: Op,
    shape: Vec<usize>,
    data: Data<'a>,
    grad: Option<Vec<f64>>,
}

/// The tape. Lifetime `'a` covers borrowed parameter slices.
pub struct Graph<'a> {
    nodes: Vec<Node<'a>>,
}

fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

/// `b` broadcasts over `a` when its shape equals a trailing suffix of `a`'s
/// (a scalar `[]` broadcasts over anything). That is the only broadcast the
/// model needs: biases and per-view embeddings over token matrices.
fn broadcast_suffix(a: &[usize], b: &[usize]) -> bool {
    b.len() <= a.len() && a[a.len() - b.len()..] == *b
}

impl<'a> Default for Graph<'a> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'a> Graph<'a> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, op: Op, shape: Vec<usize>, data: Vec<f64>) -> TensorId {
        debug_assert_eq!(numel(&shape), data.len());
        self.nodes.push(Node {
            op,
            shape,
            data: Data::Owned(data),
            grad: None,
        });
        TensorId(self.nodes.len() - 1)
    }

    /// Owned input leaf.
    pub fn input(&mut self, data: Vec<f64>, shape: &[usize]) -> Result<TensorId, TensorError> {
        if data.len() != numel(shape) {
            return Err(TensorError::DataLength {
                expected: numel(shape),
                got: data.len(),
            });
        }
        Ok(self.push(Op::Leaf, shape.to_owned(), data))
    }

    /// Borrowed input leaf; the usual entry point for model parameters.
    pub fn input_ref(&mut self, data: &'a [f64], shape: &[usize]) -> Result<TensorId, TensorError> {
        if data.len() != numel(shape) {
            return Err(TensorError::DataLength {
                expected: numel(shape),
                got: data.len(),
            });
        }
        self.nodes.push(Node {
            op: Op::Leaf,
            shape: shape.to_owned(),
            data: Data::Borrowed(data),
            grad: None,
        });
        Ok(TensorId(self.nodes.len() - 1))
    }

    pub fn scalar(&mut self, v: f64) -> TensorId {
        self.push(Op::Leaf, vec![], vec![v])
    }

    pub fn shape(&self, id: TensorId) -> &[usize] {
        &self.nodes[id.0].shape
    }

    pub fn value(&self, id: TensorId) -> &[f64] {
        self.nodes[id.0].data.as_slice()
    }

    /// Gradient of the last backward pass, if `id` was reached.
    pub fn grad(&self, id: TensorId) -> Option<&[f64]> {
        self.nodes[id.0].grad.as_deref()
    }

    /// Single-element value of a scalar node.
    pub fn item(&self, id: TensorId) -> f64 {
        debug_assert_eq!(numel(&self.nodes[id.0].shape), 1);
        self.nodes[id.0].data.as_slice()[0]
    }

    // ── forward ops ─────────────────────────────────────────────────

    pub fn matmul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a), self.shape(b));
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(TensorError::ShapeMismatch {
                op: "matmul",
                lhs: sa.to_owned(),
                rhs: sb.to_owned(),
            });
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = kernels::matmul(self.value(a), self.value(b), m, k, n);
        Ok(self.push(Op::Matmul { a, b }, vec![m, n], data))
    }

    pub fn transpose(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let s = self.shape(x);
        if s.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "transpose",
                lhs: s.to_owned(),
                rhs: vec![],
            });
        }
        let (m, n) = (s[0], s[1]);
        let v = self.value(x);
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                out[j * m + i] = v[i * n + j];
            }
        }
        Ok(self.push(Op::Transpose { x }, vec![n, m], out))
    }

    fn elementwise(
        &mut self,
        op_name: &'static str,
        a: TensorId,
        b: TensorId,
        f: impl Fn(f64, f64) -> f64,
        make: impl Fn(TensorId, TensorId) -> Op,
    ) -> Result<TensorId, TensorError> {
        let (sa, sb) = (self.shape(a).to_owned(), self.shape(b).to_owned());
        if !broadcast_suffix(&sa, &sb) {
            return Err(TensorError::ShapeMismatch {
                op: op_name,
                lhs: sa,
                rhs: sb,
            });
        }
        let (va, vb) = (self.value(a), self.value(b));
        let bn = vb.len().max(1);
        let out: Vec<f64> = va
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, vb[i % bn]))
            .collect();
        Ok(self.push(make(a, b), sa, out))
    }

    /// Elementwise sum; `b` may be a trailing-suffix broadcast of `a`.
    pub fn add(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.elementwise("add", a, b, |x, y| x + y, |a, b| Op::Add { a, b })
    }

    pub fn sub(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.elementwise("sub", a, b, |x, y| x - y, |a, b| Op::Sub { a, b })
    }

    pub fn mul(&mut self, a: TensorId, b: TensorId) -> Result<TensorId, TensorError> {
        self.elementwise("mul", a, b, |x, y| x * y, |a, b| Op::Mul { a, b })
    }

    pub fn scale(&mut self, x: TensorId, c: f64) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_owned();
        let out: Vec<f64> = self.value(x).iter().map(|&v| v * c).collect();
        Ok(self.push(Op::Scale { x, c }, shape, out))
    }

    pub fn gelu(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_owned();
        let out: Vec<f64> = self.value(x).iter().map(|&v| kernels::gelu(v)).collect();
        Ok(self.push(Op::Gelu { x }, shape, out))
    }

    /// Softmax along `axis`. The axis must exist and have nonzero extent.
    pub fn softmax(&mut self, x: TensorId, axis: usize) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_owned();
        if axis >= shape.len() || shape[axis] == 0 {
            return Err(TensorError::InvalidAxis { axis, shape });
        }
        let out = lane_map(self.value(x), &shape, axis, |lane, out| {
            kernels::softmax_lane(lane, out)
        });
        Ok(self.push(Op::Softmax { x, axis }, shape, out))
    }

    /// Layer normalization over the last axis with learned gain and bias.
    /// `eps` is fixed at [`LAYER_NORM_EPS`].
    pub fn layer_norm(
        &mut self,
        x: TensorId,
        gain: TensorId,
        bias: TensorId,
    ) -> Result<TensorId, TensorError> {
        let shape = self.shape(x).to_owned();
        let Some(&width) = shape.last() else {
            return Err(TensorError::InvalidAxis { axis: 0, shape });
        };
        if self.shape(gain) != [width] || self.shape(bias) != [width] {
            return Err(TensorError::ShapeMismatch {
                op: "layer_norm",
                lhs: shape,
                rhs: self.shape(gain).to_owned(),
            });
        }
        let (g, b) = (self.value(gain).to_owned(), self.value(bias).to_owned());
        let out = lane_map(self.value(x), &shape, shape.len() - 1, |lane, out| {
            kernels::layer_norm_lane(lane, &g, &b, LAYER_NORM_EPS, out)
        });
        Ok(self.push(Op::LayerNorm { x, gain, bias }, shape, out))
    }

    /// Row lookup: `table[ids[i], :]` stacked into a `[ids.len(), width]`
    /// matrix. Gradient scatter-adds into the table rows.
    pub fn embedding_lookup(
        &mut self,
        table: TensorId,
        ids: &[usize],
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(table);
        if s.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "embedding_lookup",
                lhs: s.to_owned(),
                rhs: vec![],
            });
        }
        let (rows, width) = (s[0], s[1]);
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(TensorError::IndexOutOfRange {
                op: "embedding_lookup",
                index: bad,
                bound: rows,
            });
        }
        let v = self.value(table);
        let mut out = Vec::with_capacity(ids.len() * width);
        for &id in ids {
            out.extend_from_slice(&v[id * width..(id + 1) * width]);
        }
        Ok(self.push(
            Op::Embedding {
                table,
                ids: ids.to_owned(),
            },
            vec![ids.len(), width],
            out,
        ))
    }

    /// Mean negative log-likelihood over rows whose target is `Some`.
    /// `class_weights`, when given, multiply each row's loss by the weight of
    /// its target class. Returns a scalar.
    pub fn cross_entropy(
        &mut self,
        logits: TensorId,
        targets: &[Option<usize>],
        class_weights: Option<&[f64]>,
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(logits);
        if s.len() != 2 || s[0] != targets.len() {
            return Err(TensorError::ShapeMismatch {
                op: "cross_entropy",
                lhs: s.to_owned(),
                rhs: vec![targets.len()],
            });
        }
        let classes = s[1];
        if let Some(w) = class_weights {
            if w.len() != classes {
                return Err(TensorError::ShapeMismatch {
                    op: "cross_entropy",
                    lhs: vec![classes],
                    rhs: vec![w.len()],
                });
            }
        }
        if let Some(&bad) = targets.iter().flatten().find(|&&t| t >= classes) {
            return Err(TensorError::IndexOutOfRange {
                op: "cross_entropy",
                index: bad,
                bound: classes,
            });
        }
        let n_valid = targets.iter().flatten().count();
        if n_valid == 0 {
            return Err(TensorError::NoValidTargets);
        }
        let v = self.value(logits);
        let mut loss = 0.0;
        for (r, t) in targets.iter().enumerate() {
            let Some(y) = t else { continue };
            let row = &v[r * classes..(r + 1) * classes];
            let w = class_weights.map_or(1.0, |cw| cw[*y]);
            loss += w * (kernels::log_sum_exp(row) - row[*y]);
        }
        loss /= n_valid as f64;
        Ok(self.push(
            Op::CrossEntropy {
                logits,
                targets: targets.to_owned(),
                class_weights: class_weights.map(|w| w.to_owned()),
            },
            vec![],
            vec![loss],
        ))
    }

    pub fn slice_rows(
        &mut self,
        x: TensorId,
        start: usize,
        len: usize,
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(x);
        if s.len() != 2 || start + len > s[0] {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_rows",
                index: start + len,
                bound: if s.len() == 2 { s[0] } else { 0 },
            });
        }
        let cols = s[1];
        let data = self.value(x)[start * cols..(start + len) * cols].to_owned();
        Ok(self.push(Op::SliceRows { x, start }, vec![len, cols], data))
    }

    pub fn slice_cols(
        &mut self,
        x: TensorId,
        start: usize,
        len: usize,
    ) -> Result<TensorId, TensorError> {
        let s = self.shape(x);
        if s.len() != 2 || start + len > s[1] {
            return Err(TensorError::IndexOutOfRange {
                op: "slice_cols",
                index: start + len,
                bound: if s.len() == 2 { s[1] } else { 0 },
            });
        }
        let (rows, cols) = (s[0], s[1]);
        let v = self.value(x);
        let mut data = Vec::with_capacity(rows * len);
        for r in 0..rows {
            data.extend_from_slice(&v[r * cols + start..r * cols + start + len]);
        }
        Ok(self.push(Op::SliceCols { x, start }, vec![rows, len], data))
    }

    pub fn concat_rows(&mut self, parts: &[TensorId]) -> Result<TensorId, TensorError> {
        let first = self.shape(parts[0]).to_owned();
        if first.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "concat_rows",
                lhs: first,
                rhs: vec![],
            });
        }
        let cols = first[1];
        let mut rows = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[1] != cols {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_rows",
                    lhs: first,
                    rhs: s.to_owned(),
                });
            }
            rows += s[0];
        }
        let mut data = Vec::with_capacity(rows * cols);
        for &p in parts {
            data.extend_from_slice(self.value(p));
        }
        Ok(self.push(
            Op::ConcatRows {
                parts: parts.to_owned(),
            },
            vec![rows, cols],
            data,
        ))
    }

    pub fn concat_cols(&mut self, parts: &[TensorId]) -> Result<TensorId, TensorError> {
        let first = self.shape(parts[0]).to_owned();
        if first.len() != 2 {
            return Err(TensorError::ShapeMismatch {
                op: "concat_cols",
                lhs: first,
                rhs: vec![],
            });
        }
        let rows = first[0];
        let mut cols = 0;
        for &p in parts {
            let s = self.shape(p);
            if s.len() != 2 || s[0] != rows {
                return Err(TensorError::ShapeMismatch {
                    op: "concat_cols",
                    lhs: first,
                    rhs: s.to_owned(),
                });
            }
            cols += s[1];
        }
        let mut data = vec![0.0; rows * cols];
        let mut offset = 0;
        for &p in parts {
            let pc = self.shape(p)[1];
            let v = self.value(p);
            for r in 0..rows {
                data[r * cols + offset..r * cols + offset + pc]
                    .copy_from_slice(&v[r * pc..(r + 1) * pc]);
            }
            offset += pc;
        }
        Ok(self.push(
            Op::ConcatCols {
                parts: parts.to_owned(),
            },
            vec![rows, cols],
            data,
        ))
    }

    /// Column means of a `[rows, cols]` matrix, producing `[cols]`.
    pub fn mean_rows(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let s = self.shape(x);
        if s.len() != 2 || s[0] == 0 {
            return Err(TensorError::ShapeMismatch {
                op: "mean_rows",
                lhs: s.to_owned(),
                rhs: vec![],
            });
        }
        let (rows, cols) = (s[0], s[1]);
        let v = self.value(x);
        let mut out = vec![0.0; cols];
        for r in 0..rows {
            for c in 0..cols {
                out[c] += v[r * cols + c];
            }
        }
        let inv = 1.0 / rows as f64;
        for o in out.iter_mut() {
            *o *= inv;
        }
        Ok(self.push(Op::MeanRows { x }, vec![cols], out))
    }

    /// Sum of all elements, producing a scalar.
    pub fn sum(&mut self, x: TensorId) -> Result<TensorId, TensorError> {
        let total: f64 = self.value(x).iter().sum();
        Ok(self.push(Op::Sum { x }, vec![], vec![total]))
    }

    /// Same data, new shape (element counts must agree).
    pub fn reshape(&mut self, x: TensorId, shape: &[usize]) -> Result<TensorId, TensorError> {
        if numel(self.shape(x)) != numel(shape) {
            return Err(TensorError::ShapeMismatch {
                op: "reshape",
                lhs: self.shape(x).to_owned(),
                rhs: shape.to_owned(),
            });
        }
        let data = self.value(x).to_owned();
        Ok(self.push(Op::Reshape { x }, shape.to_owned(), data))
    }

    // ── backward ────────────────────────────────────────────────────

    fn grad_buf(&mut self, id: TensorId) -> &mut Vec<f64> {
        let n = self.nodes[id.0].data.as_slice().len();
        self.nodes[id.0].grad.get_or_insert_with(|| vec![0.0; n])
    }

    /// Populate gradients of everything reachable from the scalar `loss`.
    /// Each node is visited once, in reverse tape order.
    pub fn backward(&mut self, loss: TensorId) -> Result<(), TensorError> {
        if numel(&self.nodes[loss.0].shape) != 1 {
            return Err(TensorError::NotScalar {
                shape: self.nodes[loss.0].shape.clone(),
            });
        }
        if !self.item(loss).is_finite() {
            return Err(TensorError::NonFinite {
                what: format!("loss value {}", self.item(loss)),
            });
        }
        self.grad_buf(loss)[0] += 1.0;
        for idx in (0..=loss.0).rev() {
            if self.nodes[idx].grad.is_none() {
                continue;
            }
            self.propagate(idx);
        }
        Ok(())
    }

    fn propagate(&mut self, idx: usize) {
        // Take the node's grad out to satisfy the borrow checker; Leaf grads
        // are put back, everything else keeps ownership until drop.
        let g = self.nodes[idx].grad.take().expect("grad present");
        match &self.nodes[idx].op {
            Op::Leaf => {
                self.nodes[idx].grad = Some(g);
            }
            Op::Matmul { a, b } => {
                let (a, b) = (*a, *b);
                let (m, k) = {
                    let s = self.shape(a);
                    (s[0], s[1])
                };
                let n = self.shape(b)[1];
                let av = self.nodes[a.0].data.as_slice().to_owned();
                let bv = self.nodes[b.0].data.as_slice().to_owned();
                kernels::matmul_nt_acc(&g, &bv, m, n, k, self.grad_buf(a));
                kernels::matmul_tn_acc(&av, &g, m, k, n, self.grad_buf(b));
            }
            Op::Transpose { x } => {
                let x = *x;
                let (n, m) = {
                    let s = &self.nodes[idx].shape;
                    (s[0], s[1])
                };
                let gx = self.grad_buf(x);
                for i in 0..n {
                    for j in 0..m {
                        gx[j * n + i] += g[i * m + j];
                    }
                }
            }
            Op::Add { a, b } => {
                let (a, b) = (*a, *b);
                accumulate(self.grad_buf(a), &g);
                accumulate_broadcast(self.grad_buf(b), &g);
            }
            Op::Sub { a, b } => {
                let (a, b) = (*a, *b);
                accumulate(self.grad_buf(a), &g);
                let gb = self.grad_buf(b);
                let bn = gb.len().max(1);
                for (i, &v) in g.iter().enumerate() {
                    gb[i % bn] -= v;
                }
            }
            Op::Mul { a, b } => {
                let (a, b) = (*a, *b);
                let av = self.nodes[a.0].data.as_slice().to_owned();
                let bv = self.nodes[b.0].data.as_slice().to_owned();
                let bn = bv.len().max(1);
                {
                    let ga = self.grad_buf(a);
                    for (i, &v) in g.iter().enumerate() {
                        ga[i] += v * bv[i % bn];
                    }
                }
                let gb = self.grad_buf(b);
                for (i, &v) in g.iter().enumerate() {
                    gb[i % bn] += v * av[i];
                }
            }
            Op::Scale { x, c } => {
                let (x, c) = (*x, *c);
                let gx = self.grad_buf(x);
                for (i, &v) in g.iter().enumerate() {
                    gx[i] += v * c;
                }
            }
            Op::Gelu { x } => {
                let x = *x;
                let xv = self.nodes[x.0].data.as_slice().to_owned();
                let gx = self.grad_buf(x);
                for (i, &v) in g.iter().enumerate() {
                    gx[i] += v * kernels::gelu_grad(xv[i]);
                }
            }
            Op::Softmax { x, axis } => {
                let (x, axis) = (*x, *axis);
                let shape = self.nodes[idx].shape.clone();
                let s = self.nodes[idx].data.as_slice().to_owned();
                let gx = self.grad_buf(x);
                for_each_lane(&shape, axis, |indices| {
                    let mut dot = 0.0;
                    for &i in indices {
                        dot += g[i] * s[i];
                    }
                    for &i in indices {
                        gx[i] += s[i] * (g[i] - dot);
                    }
                });
            }
            Op::LayerNorm { x, gain, bias } => {
                let (x, gain, bias) = (*x, *gain, *bias);
                let shape = self.nodes[idx].shape.clone();
                let width = *shape.last().expect("layer_norm rank >= 1");
                let xv = self.nodes[x.0].data.as_slice().to_owned();
                let gv = self.nodes[gain.0].data.as_slice().to_owned();
                let lanes = xv.len() / width;
                let mut gx = vec![0.0; xv.len()];
                let mut ggain = vec![0.0; width];
                let mut gbias = vec![0.0; width];
                for l in 0..lanes {
                    let xs = &xv[l * width..(l + 1) * width];
                    let gs = &g[l * width..(l + 1) * width];
                    let n = width as f64;
                    let mut mean = 0.0;
                    for &v in xs {
                        mean += v;
                    }
                    mean /= n;
                    let mut var = 0.0;
                    for &v in xs {
                        let d = v - mean;
                        var += d * d;
                    }
                    var /= n;
                    let inv = 1.0 / crate::fmath::sqrt(var + LAYER_NORM_EPS);
                    // xhat_i = (x_i - mean) * inv; y_i = xhat_i * gain_i + bias_i
                    let mut sum_gg = 0.0; // sum of upstream*gain
                    let mut sum_ggx = 0.0; // sum of upstream*gain*xhat
                    for i in 0..width {
                        let xhat = (xs[i] - mean) * inv;
                        let gg = gs[i] * gv[i];
                        sum_gg += gg;
                        sum_ggx += gg * xhat;
                        ggain[i] += gs[i] * xhat;
                        gbias[i] += gs[i];
                    }
                    for i in 0..width {
                        let xhat = (xs[i] - mean) * inv;
                        let gg = gs[i] * gv[i];
                        gx[l * width + i] += inv * (gg - sum_gg / n - xhat * sum_ggx / n);
                    }
                }
                accumulate(self.grad_buf(x), &gx);
                accumulate(self.grad_buf(gain), &ggain);
                accumulate(self.grad_buf(bias), &gbias);
            }
            Op::Embedding { table, ids } => {
                let table = *table;
                let ids = ids.clone();
                let width = self.shape(table)[1];
                let gt = self.grad_buf(table);
                for (r, &id) in ids.iter().enumerate() {
                    for c in 0..width {
                        gt[id * width + c] += g[r * width + c];
                    }
                }
            }
            Op::CrossEntropy {
                logits,
                targets,
                class_weights,
            } => {
                let logits = *logits;
                let targets = targets.clone();
                let class_weights = class_weights.clone();
                let classes = self.shape(logits)[1];
                let lv = self.nodes[logits.0].data.as_slice().to_owned();
                let n_valid = targets.iter().flatten().count() as f64;
                let scale = g[0] / n_valid;
                let gl = self.grad_buf(logits);
                let mut probs = vec![0.0; classes];
                for (r, t) in targets.iter().enumerate() {
                    let Some(y) = t else { continue };
                    let row = &lv[r * classes..(r + 1) * classes];
                    kernels::softmax_lane(row, &mut probs);
                    let w = class_weights.as_ref().map_or(1.0, |cw| cw[*y]);
                    for c in 0..classes {
                        let indicator = if c == *y { 1.0 } else { 0.0 };
                        gl[r * classes + c] += scale * w * (probs[c] - indicator);
                    }
                }
            }
            Op::SliceRows { x, start } => {
                let (x, start) = (*x, *start);
                let cols = self.shape(x)[1];
                let gx = self.grad_buf(x);
                for (i, &v) in g.iter().enumerate() {
                    gx[start * cols + i] += v;
                }
            }
            Op::SliceCols { x, start } => {
                let (x, start) = (*x, *start);
                let cols = self.shape(x)[1];
                let len = self.nodes[idx].shape[1];
                let gx = self.grad_buf(x);
                for (i, &v) in g.iter().enumerate() {
                    let (r, c) = (i / len, i % len);
                    gx[r * cols + start + c] += v;
                }
            }
            Op::ConcatRows { parts } => {
                let parts = parts.clone();
                let mut offset = 0;
                for p in parts {
                    let n = self.nodes[p.0].data.as_slice().len();
                    let slice = g[offset..offset + n].to_owned();
                    accumulate(self.grad_buf(p), &slice);
                    offset += n;
                }
            }
            Op::ConcatCols { parts } => {
                let parts = parts.clone();
                let (rows, cols) = {
                    let s = &self.nodes[idx].shape;
                    (s[0], s[1])
                };
                let mut offset = 0;
                for p in parts {
                    let pc = self.shape(p)[1];
                    let gp = self.grad_buf(p);
                    for r in 0..rows {
                        for c in 0..pc {
                            gp[r * pc + c] += g[r * cols + offset + c];
                        }
                    }
                    offset += pc;
                }
            }
            Op::MeanRows { x } => {
                let x = *x;
                let (rows, cols) = {
                    let s = self.shape(x);
                    (s[0], s[1])
                };
                let inv = 1.0 / rows as f64;
                let gx = self.grad_buf(x);
                for r in 0..rows {
                    for c in 0..cols {
                        gx[r * cols + c] += g[c] * inv;
                    }
                }
            }
            Op::Sum { x } => {
                let x = *x;
                let gx = self.grad_buf(x);
                for v in gx.iter_mut() {
                    *v += g[0];
                }
            }
            Op::Reshape { x } => {
                let x = *x;
                accumulate(self.grad_buf(x), &g);
            }
        }
    }
}

#[inline]
fn accumulate(dst: &mut [f64], src: &[f64]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Fold `src` into the (shorter, suffix-broadcast) `dst` by wrapping.
fn accumulate_broadcast(dst: &mut [f64], src: &[f64]) {
    let n = dst.len().max(1);
    for (i, &s) in src.iter().enumerate() {
        dst[i % n] += s;
    }
}

/// Apply `f` to each lane along `axis`, writing results elementwise into the
/// returned buffer. Lanes are gathered/scattered through strides, so any
/// rank works.
fn lane_map(data: &[f64], shape: &[usize], axis: usize, mut f: impl FnMut(&[f64], &mut [f64])) -> Vec<f64> {
    let mut out = vec![0.0; data.len()];
    let lane_len = shape[axis];
    let mut lane = vec![0.0; lane_len];
    let mut lane_out = vec![0.0; lane_len];
    for_each_lane(shape, axis, |indices| {
        for (k, &i) in indices.iter().enumerate() {
            lane[k] = data[i];
        }
        f(&lane, &mut lane_out);
        for (k, &i) in indices.iter().enumerate() {
            out[i] = lane_out[k];
        }
    });
    out
}

/// Visit every lane along `axis`, handing the flat indices of its elements
/// to `f` in order.
fn for_each_lane(shape: &[usize], axis: usize, mut f: impl FnMut(&[usize])) {
    let lane_len = shape[axis];
    let inner: usize = shape[axis + 1..].iter().product();
    let outer: usize = shape[..axis].iter().product();
    let mut indices = vec![0usize; lane_len];
    for o in 0..outer {
        for i in 0..inner {
            for (k, slot) in indices.iter_mut().enumerate() {
                *slot = o * lane_len * inner + k * inner + i;
            }
            f(&indices);
        }
    }
}
