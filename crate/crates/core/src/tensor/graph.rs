//! Define-by-run computation graph with reverse-mode differentiation.
//!
//! Nodes are appended in topological order and evaluated eagerly as they
//! are created. [`Graph::evaluate`] re-runs the forward pass after rebinding
//! input leaves, which is what the finite-difference checker relies on.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::tensor::kernels::{self, mm_acc, mm_at_acc, mm_bt_acc};
use crate::tensor::{Array, ParamId, ParamStore, RandomStream};
use crate::Scalar;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub usize);

/// Attention-style visibility mask applied inside a row-wise softmax.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Mask {
    None,
    /// Row `i` sees columns `0..=i`.
    Causal,
    /// Rows before `prefix` see only columns before `prefix`; later rows see
    /// every column before `prefix` plus columns up to and including their own.
    Prefix(usize),
}

impl Mask {
    #[inline]
    fn visible(self, row: usize, col: usize) -> bool {
        match self {
            Mask::None => true,
            Mask::Causal => col <= row,
            Mask::Prefix(p) => {
                if row < p {
                    col < p
                } else {
                    col < p || col <= row
                }
            }
        }
    }
}

#[derive(Clone, Debug)]
pub enum Op<S> {
    Input,
    Param(ParamId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    /// Elementwise sum; the right operand may be a `1 x cols` row broadcast over rows.
    Add(NodeId, NodeId),
    /// Elementwise product; the right operand may be a broadcast row.
    Mul(NodeId, NodeId),
    Scale(NodeId, f64),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Softmax(NodeId, Mask),
    LogSoftmax(NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    /// Rows of a table selected by index.
    Gather(NodeId, Vec<usize>),
    /// Cross-correlation of a `time x channels` input with a
    /// `(width * in_channels) x out_channels` kernel after zero padding.
    Conv1d {
        x: NodeId,
        kernel: NodeId,
        width: usize,
        pad_left: usize,
        pad_right: usize,
    },
    /// `scale * a * b^T`.
    ScaledDot(NodeId, NodeId, f64),
    /// Multiplication by a fixed, pre-scaled keep mask.
    Dropout(NodeId, Vec<S>),
    /// Per-row standardization, without affine terms.
    LayerNorm(NodeId, f64),
    Sum(NodeId),
    /// `out[i] = x[i, cols[i]]` as a column.
    PickCols(NodeId, Vec<usize>),
}

impl<S> Op<S> {
    pub fn name(&self) -> &'static str {
        match self {
            Op::Input => "input",
            Op::Param(_) => "param",
            Op::MatMul(..) => "matmul",
            Op::Transpose(_) => "transpose",
            Op::Add(..) => "add",
            Op::Mul(..) => "mul",
            Op::Scale(..) => "scale",
            Op::Tanh(_) => "tanh",
            Op::Sigmoid(_) => "sigmoid",
            Op::Relu(_) => "relu",
            Op::Exp(_) => "exp",
            Op::Log(_) => "log",
            Op::Softmax(..) => "softmax",
            Op::LogSoftmax(_) => "log_softmax",
            Op::ConcatRows(_) => "concat_rows",
            Op::ConcatCols(_) => "concat_cols",
            Op::SliceRows(..) => "slice_rows",
            Op::SliceCols(..) => "slice_cols",
            Op::Gather(..) => "gather",
            Op::Conv1d { .. } => "conv1d",
            Op::ScaledDot(..) => "scaled_dot",
            Op::Dropout(..) => "dropout",
            Op::LayerNorm(..) => "layer_norm",
            Op::Sum(_) => "sum",
            Op::PickCols(..) => "pick_cols",
        }
    }

    /// Whether the finite-difference checker can treat this node as a smooth function.
    pub fn is_differentiable(&self) -> bool {
        !matches!(self, Op::Dropout(..))
    }
}

#[derive(Clone, Debug)]
struct Node<S> {
    op: Op<S>,
    value: Array<S>,
    needs_grad: bool,
}

struct DropoutState {
    p: f64,
    rng: RandomStream,
}

pub struct Graph<S> {
    nodes: Vec<Node<S>>,
    params: HashMap<ParamId, NodeId>,
    dropout: Option<DropoutState>,
}

impl<S: Scalar> Default for Graph<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Scalar> Graph<S> {
    /// A graph with dropout disabled.
    pub fn new() -> Self {
        Self {
            nodes: Vec::new(),
            params: HashMap::new(),
            dropout: None,
        }
    }

    /// A graph whose [`Graph::dropout`] calls draw masks with probability `p`.
    pub fn with_dropout(p: f64, rng: RandomStream) -> Self {
        let mut g = Self::new();
        if p > 0.0 {
            g.dropout = Some(DropoutState { p, rng });
        }
        g
    }

    /// Hands back the dropout stream so callers can continue it across graphs.
    pub fn into_rng(self) -> Option<RandomStream> {
        self.dropout.map(|d| d.rng)
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Array<S> {
        &self.nodes[id.0].value
    }

    pub fn op(&self, id: NodeId) -> &Op<S> {
        &self.nodes[id.0].op
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        self.nodes[id.0].value.shape()
    }

    fn dims(&self, id: NodeId) -> (usize, usize) {
        let v = &self.nodes[id.0].value;
        (v.rows(), v.cols())
    }

    /// Parameters that currently have a leaf in this graph.
    pub fn param_leaves(&self) -> Vec<(ParamId, NodeId)> {
        let mut v: Vec<_> = self.params.iter().map(|(&p, &n)| (p, n)).collect();
        v.sort();
        v
    }

    pub fn input(&mut self, value: Array<S>) -> NodeId {
        self.push_leaf(Op::Input, value, false)
    }

    /// Leaf holding a copy of a stored parameter; repeated calls reuse the leaf.
    pub fn param(&mut self, store: &ParamStore<S>, id: ParamId) -> NodeId {
        if let Some(&n) = self.params.get(&id) {
            return n;
        }
        let n = self.push_leaf(Op::Param(id), store.value(id).clone(), true);
        self.params.insert(id, n);
        n
    }

    fn push_leaf(&mut self, op: Op<S>, value: Array<S>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push(&mut self, op: Op<S>) -> Result<NodeId> {
        let id = self.nodes.len();
        let value = self.compute(&op, id)?;
        let needs_grad = inputs_of(&op).iter().any(|i| self.nodes[i.0].needs_grad);
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        Ok(NodeId(id))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::MatMul(a, b))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Transpose(a))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Add(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.push(Op::Mul(a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> Result<NodeId> {
        self.push(Op::Scale(a, factor))
    }

    pub fn tanh(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Relu(a))
    }

    pub fn exp(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Log(a))
    }

    pub fn softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Softmax(a, Mask::None))
    }

    pub fn masked_softmax(&mut self, a: NodeId, mask: Mask) -> Result<NodeId> {
        self.push(Op::Softmax(a, mask))
    }

    pub fn log_softmax(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::LogSoftmax(a))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        self.push(Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        if parts.len() == 1 {
            return Ok(parts[0]);
        }
        self.push(Op::ConcatCols(parts.to_vec()))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::SliceRows(a, start, len))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        self.push(Op::SliceCols(a, start, len))
    }

    pub fn gather(&mut self, table: NodeId, indices: &[usize]) -> Result<NodeId> {
        self.push(Op::Gather(table, indices.to_vec()))
    }

    pub fn conv1d(
        &mut self,
        x: NodeId,
        kernel: NodeId,
        width: usize,
        pad_left: usize,
        pad_right: usize,
    ) -> Result<NodeId> {
        self.push(Op::Conv1d {
            x,
            kernel,
            width,
            pad_left,
            pad_right,
        })
    }

    pub fn scaled_dot(&mut self, a: NodeId, b: NodeId, scale: f64) -> Result<NodeId> {
        self.push(Op::ScaledDot(a, b, scale))
    }

    pub fn layer_norm(&mut self, a: NodeId, eps: f64) -> Result<NodeId> {
        self.push(Op::LayerNorm(a, eps))
    }

    pub fn sum(&mut self, a: NodeId) -> Result<NodeId> {
        self.push(Op::Sum(a))
    }

    pub fn pick_cols(&mut self, a: NodeId, cols: &[usize]) -> Result<NodeId> {
        self.push(Op::PickCols(a, cols.to_vec()))
    }

    /// Inverted dropout: identity when the graph was built without dropout.
    pub fn dropout(&mut self, a: NodeId) -> Result<NodeId> {
        let Some(state) = self.dropout.as_mut() else {
            return Ok(a);
        };
        let keep = 1.0 - state.p;
        let scale = S::of(1.0 / keep);
        let n = self.nodes[a.0].value.len();
        let mask = (0..n)
            .map(|_| {
                if state.rng.uniform() < keep {
                    scale
                } else {
                    S::zero()
                }
            })
            .collect();
        self.push(Op::Dropout(a, mask))
    }

    /// Applies a fixed, already scaled mask; used by tests to reproduce a draw.
    pub fn dropout_with_mask(&mut self, a: NodeId, mask: Vec<S>) -> Result<NodeId> {
        self.push(Op::Dropout(a, mask))
    }

    /// Rebinds input leaves and recomputes every derived node in order.
    pub fn evaluate(&mut self, bindings: &[(NodeId, Array<S>)]) -> Result<()> {
        for (id, value) in bindings {
            let node = self
                .nodes
                .get_mut(id.0)
                .ok_or_else(|| Error::Unsupported(format!("binding to missing node {}", id.0)))?;
            if !matches!(node.op, Op::Input | Op::Param(_)) {
                return Err(Error::Unsupported(format!(
                    "node {} ({}) is not a leaf",
                    id.0,
                    node.op.name()
                )));
            }
            if node.value.shape() != value.shape() {
                return Err(Error::Shape {
                    node: id.0,
                    op: node.op.name(),
                    detail: format!(
                        "bound shape {:?} differs from {:?}",
                        value.shape(),
                        node.value.shape()
                    ),
                });
            }
            node.value = value.clone();
        }
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Input | Op::Param(_)) {
                continue;
            }
            let v = self.compute(&self.nodes[i].op, i)?;
            self.nodes[i].value = v;
        }
        Ok(())
    }

    fn shape_err(&self, node: usize, op: &Op<S>, detail: String) -> Error {
        Error::Shape {
            node,
            op: op.name(),
            detail,
        }
    }

    fn compute(&self, op: &Op<S>, id: usize) -> Result<Array<S>> {
        let val = |n: &NodeId| &self.nodes[n.0].value;
        let err = |detail: String| self.shape_err(id, op, detail);
        Ok(match op {
            Op::Input | Op::Param(_) => unreachable!("leaves are not computed"),
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let (k2, n) = self.dims(*b);
                if k != k2 {
                    return Err(err(format!("{m}x{k} times {k2}x{n}")));
                }
                let mut out = Array::mat_zeros(m, n);
                mm_acc(val(a).data(), val(b).data(), out.data_mut(), m, k, n);
                out
            }
            Op::Transpose(a) => {
                let (m, n) = self.dims(*a);
                let src = val(a).data();
                let mut out = Array::mat_zeros(n, m);
                let dst = out.data_mut();
                for i in 0..m {
                    for j in 0..n {
                        dst[j * m + i] = src[i * n + j];
                    }
                }
                out
            }
            Op::Add(a, b) | Op::Mul(a, b) => {
                let (m, n) = self.dims(*a);
                let (bm, bn) = self.dims(*b);
                if bn != n || (bm != m && bm != 1) {
                    return Err(err(format!("{m}x{n} with {bm}x{bn}")));
                }
                let av = val(a).data();
                let bv = val(b).data();
                let add = matches!(op, Op::Add(..));
                let mut data = av.to_vec();
                for i in 0..m {
                    let brow = if bm == 1 { bv } else { &bv[i * n..(i + 1) * n] };
                    let row = &mut data[i * n..(i + 1) * n];
                    if add {
                        for (x, &y) in row.iter_mut().zip(brow) {
                            *x += y;
                        }
                    } else {
                        for (x, &y) in row.iter_mut().zip(brow) {
                            *x *= y;
                        }
                    }
                }
                Array::with_shape(val(a).shape().to_vec(), data)
            }
            Op::Scale(a, f) => {
                let f = S::of(*f);
                val(a).map(|x| x * f)
            }
            Op::Tanh(a) => val(a).map(|x| x.tanh()),
            Op::Sigmoid(a) => val(a).map(kernels::sigmoid),
            Op::Relu(a) => val(a).map(|x| x.max(S::zero())),
            Op::Exp(a) => val(a).map(|x| x.exp()),
            Op::Log(a) => val(a).map(|x| x.ln()),
            Op::Softmax(a, mask) => {
                let (m, n) = self.dims(*a);
                let src = val(a).data();
                let mut data = vec![S::zero(); m * n];
                for i in 0..m {
                    let row = &src[i * n..(i + 1) * n];
                    let out = &mut data[i * n..(i + 1) * n];
                    let mut mx = S::neg_infinity();
                    for (j, &x) in row.iter().enumerate() {
                        if mask.visible(i, j) && x > mx {
                            mx = x;
                        }
                    }
                    if mx == S::neg_infinity() {
                        return Err(err(format!("row {i} has no visible entries")));
                    }
                    let mut total = S::zero();
                    for (j, &x) in row.iter().enumerate() {
                        if mask.visible(i, j) {
                            let e = (x - mx).exp();
                            out[j] = e;
                            total += e;
                        }
                    }
                    for o in out.iter_mut() {
                        *o /= total;
                    }
                }
                Array::with_shape(val(a).shape().to_vec(), data)
            }
            Op::LogSoftmax(a) => {
                let (m, n) = self.dims(*a);
                let src = val(a).data();
                let mut data = vec![S::zero(); m * n];
                for i in 0..m {
                    let row = &src[i * n..(i + 1) * n];
                    let mx = row.iter().fold(S::neg_infinity(), |acc, &x| acc.max(x));
                    let lse = mx + row.iter().map(|&x| (x - mx).exp()).sum::<S>().ln();
                    for (o, &x) in data[i * n..(i + 1) * n].iter_mut().zip(row) {
                        *o = x - lse;
                    }
                }
                Array::with_shape(val(a).shape().to_vec(), data)
            }
            Op::ConcatRows(parts) => {
                let n = self.dims(parts[0]).1;
                let mut data = Vec::new();
                let mut rows = 0;
                for p in parts {
                    let (pm, pn) = self.dims(*p);
                    if pn != n {
                        return Err(err(format!("column counts {n} and {pn}")));
                    }
                    rows += pm;
                    data.extend_from_slice(val(p).data());
                }
                Array::with_shape(vec![rows, n], data)
            }
            Op::ConcatCols(parts) => {
                let m = self.dims(parts[0]).0;
                let mut total = 0;
                for p in parts {
                    let (pm, pn) = self.dims(*p);
                    if pm != m {
                        return Err(err(format!("row counts {m} and {pm}")));
                    }
                    total += pn;
                }
                let mut data = Vec::with_capacity(m * total);
                for i in 0..m {
                    for p in parts {
                        data.extend_from_slice(val(p).row_slice(i));
                    }
                }
                Array::with_shape(vec![m, total], data)
            }
            Op::SliceRows(a, start, len) => {
                let (m, n) = self.dims(*a);
                if *len == 0 || start + len > m {
                    return Err(err(format!("rows {start}..{} of {m}", start + len)));
                }
                Array::with_shape(
                    vec![*len, n],
                    val(a).data()[start * n..(start + len) * n].to_vec(),
                )
            }
            Op::SliceCols(a, start, len) => {
                let (m, n) = self.dims(*a);
                if *len == 0 || start + len > n {
                    return Err(err(format!("cols {start}..{} of {n}", start + len)));
                }
                let mut data = Vec::with_capacity(m * len);
                for i in 0..m {
                    data.extend_from_slice(&val(a).row_slice(i)[*start..start + len]);
                }
                Array::with_shape(vec![m, *len], data)
            }
            Op::Gather(t, idx) => {
                let (m, n) = self.dims(*t);
                if idx.is_empty() {
                    return Err(err("empty index list".into()));
                }
                let mut data = Vec::with_capacity(idx.len() * n);
                for &i in idx {
                    if i >= m {
                        return Err(err(format!("index {i} outside table of {m} rows")));
                    }
                    data.extend_from_slice(val(t).row_slice(i));
                }
                Array::with_shape(vec![idx.len(), n], data)
            }
            Op::Conv1d {
                x,
                kernel,
                width,
                pad_left,
                pad_right,
            } => {
                let (t, cin) = self.dims(*x);
                let (kr, cout) = self.dims(*kernel);
                if kr != width * cin {
                    return Err(err(format!(
                        "kernel has {kr} rows, expected width {width} x {cin} channels"
                    )));
                }
                let padded = t + pad_left + pad_right;
                if padded < *width {
                    return Err(err(format!("padded length {padded} < width {width}")));
                }
                let tout = padded - width + 1;
                let col = im2col(val(x).data(), t, cin, *width, *pad_left, tout);
                let mut out = Array::mat_zeros(tout, cout);
                mm_acc(&col, val(kernel).data(), out.data_mut(), tout, kr, cout);
                out
            }
            Op::ScaledDot(a, b, s) => {
                let (m, k) = self.dims(*a);
                let (n, k2) = self.dims(*b);
                if k != k2 {
                    return Err(err(format!("{m}x{k} against {n}x{k2}")));
                }
                let mut out = Array::mat_zeros(m, n);
                mm_bt_acc(val(a).data(), val(b).data(), out.data_mut(), m, k, n);
                let s = S::of(*s);
                for v in out.data_mut() {
                    *v *= s;
                }
                out
            }
            Op::Dropout(a, mask) => {
                if mask.len() != val(a).len() {
                    return Err(err(format!(
                        "mask of {} for {} values",
                        mask.len(),
                        val(a).len()
                    )));
                }
                let data = val(a).data().iter().zip(mask).map(|(&x, &k)| x * k).collect();
                Array::with_shape(val(a).shape().to_vec(), data)
            }
            Op::LayerNorm(a, eps) => {
                let (m, n) = self.dims(*a);
                let src = val(a).data();
                let mut data = vec![S::zero(); m * n];
                let nf = S::of(n as f64);
                for i in 0..m {
                    let row = &src[i * n..(i + 1) * n];
                    let mean = row.iter().copied().sum::<S>() / nf;
                    let var = row.iter().map(|&x| (x - mean) * (x - mean)).sum::<S>() / nf;
                    let inv = S::one() / (var + S::of(*eps)).sqrt();
                    for (o, &x) in data[i * n..(i + 1) * n].iter_mut().zip(row) {
                        *o = (x - mean) * inv;
                    }
                }
                Array::with_shape(val(a).shape().to_vec(), data)
            }
            Op::Sum(a) => Array::scalar(val(a).data().iter().copied().sum()),
            Op::PickCols(a, cols) => {
                let (m, n) = self.dims(*a);
                if cols.len() != m {
                    return Err(err(format!("{} picks for {m} rows", cols.len())));
                }
                let mut data = Vec::with_capacity(m);
                for (i, &c) in cols.iter().enumerate() {
                    if c >= n {
                        return Err(err(format!("column {c} outside {n}")));
                    }
                    data.push(val(a).get(i, c));
                }
                Array::with_shape(vec![m, 1], data)
            }
        })
    }

    /// Reverse pass from a scalar loss; returns the gradient of every parameter leaf.
    pub fn backward(&self, loss: NodeId) -> Result<Vec<(ParamId, Array<S>)>> {
        let grads = self.backward_nodes(loss)?;
        let mut out = Vec::new();
        for (pid, nid) in self.param_leaves() {
            let g = grads[nid.0]
                .clone()
                .unwrap_or_else(|| Array::zeros(self.shape(nid)));
            out.push((pid, g));
        }
        Ok(out)
    }

    /// Runs [`Graph::backward`] and writes the result into the store's gradient slots.
    pub fn backpropagate(&self, loss: NodeId, store: &mut ParamStore<S>) -> Result<()> {
        store.set_grads(self.backward(loss)?)
    }

    pub(crate) fn backward_nodes(&self, loss: NodeId) -> Result<Vec<Option<Array<S>>>> {
        let lv = &self.nodes[loss.0].value;
        if !lv.is_scalar() {
            return Err(Error::NonScalarLoss {
                node: loss.0,
                shape: lv.shape().to_vec(),
            });
        }
        let mut grads: Vec<Option<Array<S>>> = vec![None; self.nodes.len()];
        grads[loss.0] = Some(Array::filled(lv.shape(), S::one()));
        for i in (0..=loss.0).rev() {
            let node = &self.nodes[i];
            if !node.needs_grad || matches!(node.op, Op::Input | Op::Param(_)) {
                continue;
            }
            let Some(g) = grads[i].take() else { continue };
            self.backward_node(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(grads)
    }

    fn backward_node(&self, i: usize, g: &Array<S>, grads: &mut [Option<Array<S>>]) {
        let node = &self.nodes[i];
        let y = node.value.data();
        let gd = g.data();
        let val = |n: &NodeId| &self.nodes[n.0].value;
        match &node.op {
            Op::Input | Op::Param(_) => {}
            Op::MatMul(a, b) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).1;
                self.acc(grads, *a, |da| mm_bt_acc(gd, val(b).data(), da, m, n, k));
                self.acc(grads, *b, |db| mm_at_acc(val(a).data(), gd, db, m, k, n));
            }
            Op::Transpose(a) => {
                let (m, n) = self.dims(*a);
                self.acc(grads, *a, |da| {
                    for r in 0..m {
                        for c in 0..n {
                            da[r * n + c] += gd[c * m + r];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                self.acc(grads, *a, |da| add_into(da, gd));
                let (m, n) = self.dims(*a);
                let bm = self.dims(*b).0;
                self.acc(grads, *b, |db| {
                    if bm == m {
                        add_into(db, gd);
                    } else {
                        for r in 0..m {
                            add_into(db, &gd[r * n..(r + 1) * n]);
                        }
                    }
                });
            }
            Op::Mul(a, b) => {
                let (m, n) = self.dims(*a);
                let bm = self.dims(*b).0;
                let av = val(a).data();
                let bv = val(b).data();
                let brow = |r: usize| if bm == 1 { 0 } else { r * n };
                self.acc(grads, *a, |da| {
                    for r in 0..m {
                        for c in 0..n {
                            da[r * n + c] += gd[r * n + c] * bv[brow(r) + c];
                        }
                    }
                });
                self.acc(grads, *b, |db| {
                    for r in 0..m {
                        for c in 0..n {
                            db[brow(r) + c] += gd[r * n + c] * av[r * n + c];
                        }
                    }
                });
            }
            Op::Scale(a, f) => {
                let f = S::of(*f);
                self.acc(grads, *a, |da| {
                    for (d, &gv) in da.iter_mut().zip(gd) {
                        *d += gv * f;
                    }
                });
            }
            Op::Tanh(a) => self.acc(grads, *a, |da| {
                for ((d, &gv), &yv) in da.iter_mut().zip(gd).zip(y) {
                    *d += gv * (S::one() - yv * yv);
                }
            }),
            Op::Sigmoid(a) => self.acc(grads, *a, |da| {
                for ((d, &gv), &yv) in da.iter_mut().zip(gd).zip(y) {
                    *d += gv * yv * (S::one() - yv);
                }
            }),
            Op::Relu(a) => {
                let x = val(a).data();
                self.acc(grads, *a, |da| {
                    for ((d, &gv), &xv) in da.iter_mut().zip(gd).zip(x) {
                        if xv > S::zero() {
                            *d += gv;
                        }
                    }
                })
            }
            Op::Exp(a) => self.acc(grads, *a, |da| {
                for ((d, &gv), &yv) in da.iter_mut().zip(gd).zip(y) {
                    *d += gv * yv;
                }
            }),
            Op::Log(a) => {
                let x = val(a).data();
                self.acc(grads, *a, |da| {
                    for ((d, &gv), &xv) in da.iter_mut().zip(gd).zip(x) {
                        *d += gv / xv;
                    }
                })
            }
            Op::Softmax(a, _) => {
                let (m, n) = self.dims(*a);
                self.acc(grads, *a, |da| {
                    for r in 0..m {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &gd[r * n..(r + 1) * n];
                        let inner = kernels::dot(yr, gr);
                        for c in 0..n {
                            da[r * n + c] += yr[c] * (gr[c] - inner);
                        }
                    }
                });
            }
            Op::LogSoftmax(a) => {
                let (m, n) = self.dims(*a);
                self.acc(grads, *a, |da| {
                    for r in 0..m {
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &gd[r * n..(r + 1) * n];
                        let total: S = gr.iter().copied().sum();
                        for c in 0..n {
                            da[r * n + c] += gr[c] - yr[c].exp() * total;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = val(p).len();
                    self.acc(grads, *p, |dp| add_into(dp, &gd[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.value.cols();
                let mut offset = 0;
                for p in parts {
                    let (pm, pn) = self.dims(*p);
                    self.acc(grads, *p, |dp| {
                        for r in 0..pm {
                            add_into(
                                &mut dp[r * pn..(r + 1) * pn],
                                &gd[r * total + offset..r * total + offset + pn],
                            );
                        }
                    });
                    offset += pn;
                }
            }
            Op::SliceRows(a, start, len) => {
                let n = self.dims(*a).1;
                self.acc(grads, *a, |da| {
                    add_into(&mut da[start * n..(start + len) * n], gd);
                });
            }
            Op::SliceCols(a, start, len) => {
                let (m, n) = self.dims(*a);
                self.acc(grads, *a, |da| {
                    for r in 0..m {
                        add_into(
                            &mut da[r * n + start..r * n + start + len],
                            &gd[r * len..(r + 1) * len],
                        );
                    }
                });
            }
            Op::Gather(t, idx) => {
                let n = self.dims(*t).1;
                self.acc(grads, *t, |dt| {
                    for (r, &i) in idx.iter().enumerate() {
                        add_into(&mut dt[i * n..(i + 1) * n], &gd[r * n..(r + 1) * n]);
                    }
                });
            }
            Op::Conv1d {
                x,
                kernel,
                width,
                pad_left,
                ..
            } => {
                let (t, cin) = self.dims(*x);
                let (kr, cout) = self.dims(*kernel);
                let tout = node.value.rows();
                let col = im2col(val(x).data(), t, cin, *width, *pad_left, tout);
                self.acc(grads, *kernel, |dk| mm_at_acc(&col, gd, dk, tout, kr, cout));
                if self.nodes[x.0].needs_grad {
                    let mut dcol = vec![S::zero(); tout * kr];
                    mm_bt_acc(gd, val(kernel).data(), &mut dcol, tout, cout, kr);
                    self.acc(grads, *x, |dx| {
                        col2im_acc(&dcol, dx, t, cin, *width, *pad_left, tout)
                    });
                }
            }
            Op::ScaledDot(a, b, s) => {
                let (m, k) = self.dims(*a);
                let n = self.dims(*b).0;
                let s = S::of(*s);
                let gs: Vec<S> = gd.iter().map(|&v| v * s).collect();
                self.acc(grads, *a, |da| mm_acc(&gs, val(b).data(), da, m, n, k));
                self.acc(grads, *b, |db| mm_at_acc(&gs, val(a).data(), db, m, n, k));
            }
            Op::Dropout(a, mask) => self.acc(grads, *a, |da| {
                for ((d, &gv), &k) in da.iter_mut().zip(gd).zip(mask) {
                    *d += gv * k;
                }
            }),
            Op::LayerNorm(a, eps) => {
                let (m, n) = self.dims(*a);
                let x = val(a).data();
                let nf = S::of(n as f64);
                self.acc(grads, *a, |da| {
                    for r in 0..m {
                        let xr = &x[r * n..(r + 1) * n];
                        let mean = xr.iter().copied().sum::<S>() / nf;
                        let var = xr.iter().map(|&v| (v - mean) * (v - mean)).sum::<S>() / nf;
                        let inv = S::one() / (var + S::of(*eps)).sqrt();
                        let yr = &y[r * n..(r + 1) * n];
                        let gr = &gd[r * n..(r + 1) * n];
                        let gmean = gr.iter().copied().sum::<S>() / nf;
                        let gy = kernels::dot(gr, yr) / nf;
                        for c in 0..n {
                            da[r * n + c] += inv * (gr[c] - gmean - yr[c] * gy);
                        }
                    }
                });
            }
            Op::Sum(a) => {
                let gv = gd[0];
                self.acc(grads, *a, |da| {
                    for d in da.iter_mut() {
                        *d += gv;
                    }
                });
            }
            Op::PickCols(a, cols) => {
                let n = self.dims(*a).1;
                self.acc(grads, *a, |da| {
                    for (r, &c) in cols.iter().enumerate() {
                        da[r * n + c] += gd[r];
                    }
                });
            }
        }
    }

    fn acc(&self, grads: &mut [Option<Array<S>>], target: NodeId, f: impl FnOnce(&mut [S])) {
        if !self.nodes[target.0].needs_grad {
            return;
        }
        let slot = grads[target.0].get_or_insert_with(|| Array::zeros(self.shape(target)));
        f(slot.data_mut());
    }
}

fn inputs_of<S>(op: &Op<S>) -> Vec<NodeId> {
    match op {
        Op::Input | Op::Param(_) => vec![],
        Op::MatMul(a, b) | Op::Add(a, b) | Op::Mul(a, b) | Op::ScaledDot(a, b, _) => vec![*a, *b],
        Op::Conv1d { x, kernel, .. } => vec![*x, *kernel],
        Op::ConcatRows(p) | Op::ConcatCols(p) => p.clone(),
        Op::Transpose(a)
        | Op::Scale(a, _)
        | Op::Tanh(a)
        | Op::Sigmoid(a)
        | Op::Relu(a)
        | Op::Exp(a)
        | Op::Log(a)
        | Op::Softmax(a, _)
        | Op::LogSoftmax(a)
        | Op::SliceRows(a, ..)
        | Op::SliceCols(a, ..)
        | Op::Gather(a, _)
        | Op::Dropout(a, _)
        | Op::LayerNorm(a, _)
        | Op::Sum(a)
        | Op::PickCols(a, _) => vec![*a],
    }
}

#[inline]
fn add_into<S: Scalar>(dst: &mut [S], src: &[S]) {
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Unrolls padded windows: row `t` holds input rows `t - pad_left .. t - pad_left + width`.
fn im2col<S: Scalar>(
    x: &[S],
    t: usize,
    cin: usize,
    width: usize,
    pad_left: usize,
    tout: usize,
) -> Vec<S> {
    let mut col = vec![S::zero(); tout * width * cin];
    for o in 0..tout {
        for j in 0..width {
            let src = o + j;
            if src < pad_left || src - pad_left >= t {
                continue;
            }
            let r = src - pad_left;
            let dst = o * width * cin + j * cin;
            col[dst..dst + cin].copy_from_slice(&x[r * cin..(r + 1) * cin]);
        }
    }
    col
}

fn col2im_acc<S: Scalar>(
    dcol: &[S],
    dx: &mut [S],
    t: usize,
    cin: usize,
    width: usize,
    pad_left: usize,
    tout: usize,
) {
    for o in 0..tout {
        for j in 0..width {
            let src = o + j;
            if src < pad_left || src - pad_left >= t {
                continue;
            }
            let r = src - pad_left;
            let from = o * width * cin + j * cin;
            add_into(&mut dx[r * cin..(r + 1) * cin], &dcol[from..from + cin]);
        }
    }
}
