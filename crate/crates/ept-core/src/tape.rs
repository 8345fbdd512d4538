//! Reverse-mode automatic differentiation on an append-only tape.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding the
//! operation, its input node ids, and the computed value. [`Tape::backward`]
//! walks the nodes in reverse, applying each operation's vector-Jacobian
//! product and accumulating gradients into the trainable leaves registered
//! with [`Tape::param`]. Frozen inputs enter through [`Tape::leaf`] and are
//! skipped entirely: the `needs_grad` flag propagates forward, and backward
//! ignores any node it never reached.
//!
//! Each training step builds a fresh tape from the current parameter values,
//! so tapes are cheap, short-lived, and never mutated after the forward pass.

use std::collections::hash_map::DefaultHasher;
use std::collections::BTreeMap;
use std::hash::{Hash, Hasher};

use crate::error::{EptError, Result};
use crate::matrix::{Axis, Matrix};
use crate::scalar::Scalar;

/// Handle to a node on a specific tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

#[derive(Debug, Clone)]
enum Op<F> {
    /// Constant input; never receives gradient.
    Leaf,
    /// Trainable input; gradient is reported under its name.
    Param,
    Matmul(NodeId, NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, F),
    AddScalar(NodeId, F),
    Relu(NodeId),
    Softmax(NodeId, Axis),
    Transpose(NodeId),
    /// n×m → n×1 sums of each row.
    RowSums(NodeId),
    /// n×m → 1×m column means.
    MeanRows(NodeId),
    /// Add a 1×m row to every row.
    AddRowBroadcast(NodeId, NodeId),
    /// Multiply every row elementwise by an n×1 column entry.
    MulColBroadcast(NodeId, NodeId),
    ConcatRows(Vec<NodeId>),
    ConcatCols(Vec<NodeId>),
    SliceRows(NodeId, usize, usize),
    SliceCols(NodeId, usize, usize),
    /// out[i, :] = src[ids[i], :]; repeated ids accumulate on backward.
    GatherRows(NodeId, Vec<usize>),
    /// Per-row normalization to zero mean and unit variance (no affine).
    LayerNormRows(NodeId, F),
    /// Mean over rows of `logsumexp(row) - row[target]`; yields a 1×1 value.
    CrossEntropyMean(NodeId, Vec<usize>),
    /// n×m → 1×1 sum of all entries.
    SumAll(NodeId),
}

#[derive(Debug, Clone)]
struct Node<F> {
    op: Op<F>,
    value: Matrix<F>,
    needs_grad: bool,
}

/// Gradients keyed by parameter name, as produced by [`Tape::backward`].
#[derive(Debug, Clone)]
pub struct Gradients<F> {
    by_name: BTreeMap<String, Matrix<F>>,
}

impl<F: Scalar> Gradients<F> {
    pub fn get(&self, name: &str) -> Option<&Matrix<F>> {
        self.by_name.get(name)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<F>)> {
        self.by_name.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.by_name.len()
    }

    pub fn is_empty(&self) -> bool {
        self.by_name.is_empty()
    }
}

/// Wengert list: forward values plus enough structure to run backward once.
#[derive(Debug)]
pub struct Tape<F> {
    nodes: Vec<Node<F>>,
    params: BTreeMap<String, NodeId>,
}

impl<F: Scalar> Default for Tape<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> Tape<F> {
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            params: BTreeMap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, id: NodeId) -> &Matrix<F> {
        &self.nodes[id.0].value
    }

    /// Names of the registered trainable leaves, sorted.
    pub fn param_names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(|s| s.as_str())
    }

    /// Constant input: participates in the forward pass but never in backward.
    pub fn leaf(&mut self, value: Matrix<F>) -> NodeId {
        self.push(Op::Leaf, value, false)
    }

    /// Trainable input; its gradient appears in [`Gradients`] under `name`.
    pub fn param(&mut self, name: &str, value: Matrix<F>) -> Result<NodeId> {
        if self.params.contains_key(name) {
            return Err(EptError::Contract(format!(
                "parameter '{name}' registered twice on one tape"
            )));
        }
        let id = self.push(Op::Param, value, true);
        self.params.insert(name.to_string(), id);
        Ok(id)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.val(a).matmul(self.val(b))?;
        Ok(self.push_binary(Op::Matmul(a, b), value, a, b))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.val(a).add(self.val(b))?;
        Ok(self.push_binary(Op::Add(a, b), value, a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.val(a).sub(self.val(b))?;
        Ok(self.push_binary(Op::Sub(a, b), value, a, b))
    }

    pub fn hadamard(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let value = self.val(a).hadamard(self.val(b))?;
        Ok(self.push_binary(Op::Hadamard(a, b), value, a, b))
    }

    pub fn scale(&mut self, a: NodeId, factor: F) -> NodeId {
        let value = self.val(a).scale(factor);
        self.push_unary(Op::Scale(a, factor), value, a)
    }

    pub fn add_scalar(&mut self, a: NodeId, term: F) -> NodeId {
        let value = self.val(a).map(|x| x + term);
        self.push_unary(Op::AddScalar(a, term), value, a)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let value = self.val(a).relu();
        self.push_unary(Op::Relu(a), value, a)
    }

    pub fn softmax(&mut self, a: NodeId, axis: Axis) -> NodeId {
        let value = self.val(a).softmax(axis);
        self.push_unary(Op::Softmax(a, axis), value, a)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let value = self.val(a).transpose();
        self.push_unary(Op::Transpose(a), value, a)
    }

    pub fn row_sums(&mut self, a: NodeId) -> NodeId {
        let value = self.val(a).sum_axis(Axis::Cols);
        self.push_unary(Op::RowSums(a), value, a)
    }

    pub fn mean_rows(&mut self, a: NodeId) -> Result<NodeId> {
        let (rows, _) = self.val(a).shape();
        if rows == 0 {
            return Err(EptError::Contract(
                "mean_rows over an empty matrix".to_string(),
            ));
        }
        let value = self
            .val(a)
            .sum_axis(Axis::Rows)
            .scale(F::one() / F::cast(rows as f64));
        Ok(self.push_unary(Op::MeanRows(a), value, a))
    }

    pub fn add_row_broadcast(&mut self, a: NodeId, row: NodeId) -> Result<NodeId> {
        let value = self.val(a).add_row_broadcast(self.val(row))?;
        Ok(self.push_binary(Op::AddRowBroadcast(a, row), value, a, row))
    }

    pub fn mul_col_broadcast(&mut self, a: NodeId, col: NodeId) -> Result<NodeId> {
        let value = self.val(a).mul_col_broadcast(self.val(col))?;
        Ok(self.push_binary(Op::MulColBroadcast(a, col), value, a, col))
    }

    pub fn concat_rows(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Matrix<F>> = parts.iter().map(|&p| self.val(p)).collect();
        let value = Matrix::concat_rows(&values)?;
        let needs = parts.iter().any(|&p| self.nodes[p.0].needs_grad);
        Ok(self.push(Op::ConcatRows(parts.to_vec()), value, needs))
    }

    pub fn concat_cols(&mut self, parts: &[NodeId]) -> Result<NodeId> {
        let values: Vec<&Matrix<F>> = parts.iter().map(|&p| self.val(p)).collect();
        let value = Matrix::concat_cols(&values)?;
        let needs = parts.iter().any(|&p| self.nodes[p.0].needs_grad);
        Ok(self.push(Op::ConcatCols(parts.to_vec()), value, needs))
    }

    pub fn slice_rows(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (rows, _) = self.val(a).shape();
        if start + len > rows {
            return Err(EptError::Contract(format!(
                "row slice {start}..{} exceeds {rows} rows",
                start + len
            )));
        }
        let value = self.val(a).slice_rows(start, len);
        Ok(self.push_unary(Op::SliceRows(a, start, len), value, a))
    }

    pub fn slice_cols(&mut self, a: NodeId, start: usize, len: usize) -> Result<NodeId> {
        let (_, cols) = self.val(a).shape();
        if start + len > cols {
            return Err(EptError::Contract(format!(
                "column slice {start}..{} exceeds {cols} columns",
                start + len
            )));
        }
        let value = self.val(a).slice_cols(start, len);
        Ok(self.push_unary(Op::SliceCols(a, start, len), value, a))
    }

    pub fn gather_rows(&mut self, src: NodeId, ids: &[usize]) -> Result<NodeId> {
        let (rows, cols) = self.val(src).shape();
        if let Some(&bad) = ids.iter().find(|&&i| i >= rows) {
            return Err(EptError::Contract(format!(
                "gather index {bad} exceeds {rows} rows"
            )));
        }
        let mut value = Matrix::zeros(ids.len(), cols);
        for (out_i, &src_i) in ids.iter().enumerate() {
            for j in 0..cols {
                value.set(out_i, j, self.val(src).get(src_i, j));
            }
        }
        Ok(self.push_unary(Op::GatherRows(src, ids.to_vec()), value, src))
    }

    pub fn layer_norm_rows(&mut self, a: NodeId, eps: F) -> Result<NodeId> {
        let (rows, cols) = self.val(a).shape();
        if cols == 0 {
            return Err(EptError::Contract(
                "layer norm over zero-width rows".to_string(),
            ));
        }
        let mut value = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let (mu, sigma) = row_moments(self.val(a), i, eps);
            for j in 0..cols {
                value.set(i, j, (self.val(a).get(i, j) - mu) / sigma);
            }
        }
        Ok(self.push_unary(Op::LayerNormRows(a, eps), value, a))
    }

    /// Mean cross-entropy of each logits row against its integer target.
    pub fn cross_entropy_mean(&mut self, logits: NodeId, targets: &[usize]) -> Result<NodeId> {
        let (rows, cols) = self.val(logits).shape();
        if targets.len() != rows {
            return Err(EptError::Contract(format!(
                "{} targets for {rows} logit rows",
                targets.len()
            )));
        }
        if let Some(&bad) = targets.iter().find(|&&t| t >= cols) {
            return Err(EptError::Contract(format!(
                "target class {bad} exceeds {cols} logits"
            )));
        }
        if rows == 0 {
            return Err(EptError::Contract(
                "cross entropy over an empty batch".to_string(),
            ));
        }
        let mut total = F::zero();
        for (i, &t) in targets.iter().enumerate() {
            let row = self.val(logits).row(i);
            total = total + log_sum_exp(row) - row[t];
        }
        let value = Matrix::from_vec(1, 1, vec![total / F::cast(rows as f64)]);
        Ok(self.push_unary(
            Op::CrossEntropyMean(logits, targets.to_vec()),
            value,
            logits,
        ))
    }

    pub fn sum_all(&mut self, a: NodeId) -> NodeId {
        let value = Matrix::from_vec(1, 1, vec![self.val(a).sum()]);
        self.push_unary(Op::SumAll(a), value, a)
    }

    /// Hash of the ReLU active sets of this forward pass. Two passes through
    /// the same graph share a fingerprint exactly when every ReLU saw the
    /// same sign pattern, i.e. no kink was crossed between them.
    pub fn kink_fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        for node in &self.nodes {
            if let Op::Relu(a) = node.op {
                for &x in self.nodes[a.0].value.data() {
                    (x > F::zero()).hash(&mut h);
                }
            }
        }
        h.finish()
    }

    /// Reverse sweep from a scalar (1×1) node. Returns gradients for every
    /// registered parameter that `loss` depends on; parameters the loss never
    /// touched get zero gradients of the right shape.
    pub fn backward(&self, loss: NodeId) -> Result<Gradients<F>> {
        if self.val(loss).shape() != (1, 1) {
            let (r, c) = self.val(loss).shape();
            return Err(EptError::Contract(format!(
                "backward needs a 1x1 loss node, got {r}x{c}"
            )));
        }
        let mut grads: Vec<Option<Matrix<F>>> = vec![None; self.nodes.len()];
        if self.nodes[loss.0].needs_grad {
            grads[loss.0] = Some(Matrix::filled(1, 1, F::one()));
        }

        for idx in (0..=loss.0).rev() {
            if !self.nodes[idx].needs_grad {
                continue;
            }
            let dy = match grads[idx].take() {
                Some(g) => g,
                None => continue,
            };
            self.apply_vjp(idx, &dy, &mut grads)?;
            // Parameter nodes keep their accumulated gradient for reporting.
            if matches!(self.nodes[idx].op, Op::Param) {
                grads[idx] = Some(dy);
            }
        }

        let mut by_name = BTreeMap::new();
        for (name, &id) in &self.params {
            let g = grads[id.0]
                .take()
                .unwrap_or_else(|| Matrix::zeros(self.val(id).rows(), self.val(id).cols()));
            by_name.insert(name.clone(), g);
        }
        Ok(Gradients { by_name })
    }

    fn apply_vjp(&self, idx: usize, dy: &Matrix<F>, grads: &mut [Option<Matrix<F>>]) -> Result<()> {
        match &self.nodes[idx].op {
            Op::Leaf | Op::Param => {}
            Op::Matmul(a, b) => {
                let bt = self.val(*b).transpose();
                self.accum(grads, *a, dy.matmul(&bt)?)?;
                let at = self.val(*a).transpose();
                self.accum(grads, *b, at.matmul(dy)?)?;
            }
            Op::Add(a, b) => {
                self.accum(grads, *a, dy.clone())?;
                self.accum(grads, *b, dy.clone())?;
            }
            Op::Sub(a, b) => {
                self.accum(grads, *a, dy.clone())?;
                self.accum(grads, *b, dy.scale(-F::one()))?;
            }
            Op::Hadamard(a, b) => {
                self.accum(grads, *a, dy.hadamard(self.val(*b))?)?;
                self.accum(grads, *b, dy.hadamard(self.val(*a))?)?;
            }
            Op::Scale(a, factor) => {
                self.accum(grads, *a, dy.scale(*factor))?;
            }
            Op::AddScalar(a, _) => {
                self.accum(grads, *a, dy.clone())?;
            }
            Op::Relu(a) => {
                // Subgradient 0 at the kink.
                let mask = self
                    .val(*a)
                    .map(|x| if x > F::zero() { F::one() } else { F::zero() });
                self.accum(grads, *a, dy.hadamard(&mask)?)?;
            }
            Op::Softmax(a, axis) => {
                let y = &self.nodes[idx].value;
                self.accum(grads, *a, softmax_vjp(y, dy, *axis))?;
            }
            Op::Transpose(a) => {
                self.accum(grads, *a, dy.transpose())?;
            }
            Op::RowSums(a) => {
                let (rows, cols) = self.val(*a).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for i in 0..rows {
                    let g = dy.get(i, 0);
                    for j in 0..cols {
                        dx.set(i, j, g);
                    }
                }
                self.accum(grads, *a, dx)?;
            }
            Op::MeanRows(a) => {
                let (rows, cols) = self.val(*a).shape();
                let inv = F::one() / F::cast(rows as f64);
                let mut dx = Matrix::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..cols {
                        dx.set(i, j, dy.get(0, j) * inv);
                    }
                }
                self.accum(grads, *a, dx)?;
            }
            Op::AddRowBroadcast(a, row) => {
                self.accum(grads, *a, dy.clone())?;
                self.accum(grads, *row, dy.sum_axis(Axis::Rows))?;
            }
            Op::MulColBroadcast(a, col) => {
                let da = dy.mul_col_broadcast(self.val(*col))?;
                self.accum(grads, *a, da)?;
                let dcol = dy.hadamard(self.val(*a))?.sum_axis(Axis::Cols);
                self.accum(grads, *col, dcol)?;
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let rows = self.val(p).rows();
                    if rows > 0 {
                        self.accum(grads, p, dy.slice_rows(offset, rows))?;
                    }
                    offset += rows;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let cols = self.val(p).cols();
                    if cols > 0 {
                        self.accum(grads, p, dy.slice_cols(offset, cols))?;
                    }
                    offset += cols;
                }
            }
            Op::SliceRows(a, start, len) => {
                let (rows, cols) = self.val(*a).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for i in 0..*len {
                    for j in 0..cols {
                        dx.set(start + i, j, dy.get(i, j));
                    }
                }
                self.accum(grads, *a, dx)?;
            }
            Op::SliceCols(a, start, len) => {
                let (rows, cols) = self.val(*a).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for i in 0..rows {
                    for j in 0..*len {
                        dx.set(i, start + j, dy.get(i, j));
                    }
                }
                self.accum(grads, *a, dx)?;
            }
            Op::GatherRows(src, ids) => {
                let (rows, cols) = self.val(*src).shape();
                let mut dx = Matrix::zeros(rows, cols);
                for (out_i, &src_i) in ids.iter().enumerate() {
                    for j in 0..cols {
                        let cur = dx.get(src_i, j);
                        dx.set(src_i, j, cur + dy.get(out_i, j));
                    }
                }
                self.accum(grads, *src, dx)?;
            }
            Op::LayerNormRows(a, eps) => {
                let x = self.val(*a);
                let y = &self.nodes[idx].value;
                let (rows, cols) = x.shape();
                let inv_n = F::one() / F::cast(cols as f64);
                let mut dx = Matrix::zeros(rows, cols);
                for i in 0..rows {
                    let (_, sigma) = row_moments(x, i, *eps);
                    let mut mean_dy = F::zero();
                    let mut mean_dy_y = F::zero();
                    for j in 0..cols {
                        mean_dy = mean_dy + dy.get(i, j);
                        mean_dy_y = mean_dy_y + dy.get(i, j) * y.get(i, j);
                    }
                    mean_dy = mean_dy * inv_n;
                    mean_dy_y = mean_dy_y * inv_n;
                    for j in 0..cols {
                        let v = (dy.get(i, j) - mean_dy - y.get(i, j) * mean_dy_y) / sigma;
                        dx.set(i, j, v);
                    }
                }
                self.accum(grads, *a, dx)?;
            }
            Op::CrossEntropyMean(logits, targets) => {
                let x = self.val(*logits);
                let (rows, cols) = x.shape();
                let g = dy.get(0, 0) / F::cast(rows as f64);
                let probs = x.softmax(Axis::Cols);
                let mut dx = Matrix::zeros(rows, cols);
                for (i, &t) in targets.iter().enumerate() {
                    for j in 0..cols {
                        let ind = if j == t { F::one() } else { F::zero() };
                        dx.set(i, j, (probs.get(i, j) - ind) * g);
                    }
                }
                self.accum(grads, *logits, dx)?;
            }
            Op::SumAll(a) => {
                let (rows, cols) = self.val(*a).shape();
                self.accum(grads, *a, Matrix::filled(rows, cols, dy.get(0, 0)))?;
            }
        }
        Ok(())
    }

    fn accum(&self, grads: &mut [Option<Matrix<F>>], id: NodeId, delta: Matrix<F>) -> Result<()> {
        if !self.nodes[id.0].needs_grad {
            return Ok(());
        }
        grads[id.0] = Some(match grads[id.0].take() {
            Some(g) => g.add(&delta)?,
            None => delta,
        });
        Ok(())
    }

    fn val(&self, id: NodeId) -> &Matrix<F> {
        &self.nodes[id.0].value
    }

    fn push(&mut self, op: Op<F>, value: Matrix<F>, needs_grad: bool) -> NodeId {
        self.nodes.push(Node {
            op,
            value,
            needs_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn push_unary(&mut self, op: Op<F>, value: Matrix<F>, a: NodeId) -> NodeId {
        let needs = self.nodes[a.0].needs_grad;
        self.push(op, value, needs)
    }

    fn push_binary(&mut self, op: Op<F>, value: Matrix<F>, a: NodeId, b: NodeId) -> NodeId {
        let needs = self.nodes[a.0].needs_grad || self.nodes[b.0].needs_grad;
        self.push(op, value, needs)
    }
}

/// Named parameter set living outside any tape. Each training step copies the
/// current values onto a fresh tape, runs backward, and applies the returned
/// gradients here.
#[derive(Debug, Clone, PartialEq)]
pub struct NamedParams<F> {
    map: BTreeMap<String, Matrix<F>>,
}

impl<F: Scalar> Default for NamedParams<F> {
    fn default() -> Self {
        Self::new()
    }
}

impl<F: Scalar> NamedParams<F> {
    pub fn new() -> Self {
        NamedParams {
            map: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, name: &str, value: Matrix<F>) {
        self.map.insert(name.to_string(), value);
    }

    pub fn get(&self, name: &str) -> Option<&Matrix<F>> {
        self.map.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Matrix<F>> {
        self.map.get_mut(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    /// Iteration order is the sorted name order, so it is deterministic.
    pub fn iter(&self) -> impl Iterator<Item = (&str, &Matrix<F>)> {
        self.map.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Matrix<F>)> {
        self.map.iter_mut().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.map.keys().map(|s| s.as_str())
    }

    pub fn len(&self) -> usize {
        self.map.len()
    }

    pub fn is_empty(&self) -> bool {
        self.map.is_empty()
    }

    /// Total scalar entries across all parameters.
    pub fn total_len(&self) -> usize {
        self.map.values().map(|m| m.len()).sum()
    }

    /// Register every parameter on a tape, returning name → node id.
    pub fn register_all(&self, tape: &mut Tape<F>) -> Result<BTreeMap<String, NodeId>> {
        let mut ids = BTreeMap::new();
        for (name, value) in &self.map {
            ids.insert(name.clone(), tape.param(name, value.clone())?);
        }
        Ok(ids)
    }
}

fn row_moments<F: Scalar>(m: &Matrix<F>, row: usize, eps: F) -> (F, F) {
    let n = F::cast(m.cols() as f64);
    let mut mu = F::zero();
    for &x in m.row(row) {
        mu = mu + x;
    }
    mu = mu / n;
    let mut var = F::zero();
    for &x in m.row(row) {
        let d = x - mu;
        var = var + d * d;
    }
    var = var / n;
    (mu, (var + eps).sqrt())
}

fn log_sum_exp<F: Scalar>(row: &[F]) -> F {
    let max = row.iter().fold(F::neg_infinity(), |acc, &x| acc.max(x));
    let mut sum = F::zero();
    for &x in row {
        sum = sum + (x - max).exp();
    }
    max + sum.ln()
}

/// dX for `Y = softmax(X)` along `axis`: `y ⊙ (dy − Σ(dy ⊙ y))` per slice.
fn softmax_vjp<F: Scalar>(y: &Matrix<F>, dy: &Matrix<F>, axis: Axis) -> Matrix<F> {
    match axis {
        Axis::Cols => {
            let (rows, cols) = y.shape();
            let mut dx = Matrix::zeros(rows, cols);
            for i in 0..rows {
                let mut dot = F::zero();
                for j in 0..cols {
                    dot = dot + dy.get(i, j) * y.get(i, j);
                }
                for j in 0..cols {
                    dx.set(i, j, y.get(i, j) * (dy.get(i, j) - dot));
                }
            }
            dx
        }
        Axis::Rows => softmax_vjp(&y.transpose(), &dy.transpose(), Axis::Cols).transpose(),
    }
}
