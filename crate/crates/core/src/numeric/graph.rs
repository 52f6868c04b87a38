//! Define-by-run reverse-mode differentiation over two-dimensional values.
//!
//! A [`Graph`] records every operation as a node holding its forward value.
//! [`Graph::backward`] walks the nodes in reverse creation order and
//! accumulates adjoints. Nodes that cannot reach a trainable leaf are never
//! given a gradient buffer, so blocked inputs of [`Graph::stop_gradient`]
//! receive exactly nothing.

use std::collections::{BTreeMap, BTreeSet};

use super::params::{ParamGroup, ParamId, ParamKind, ParamStore};
use super::tensor::Tensor;
use crate::error::{Error, Result};

/// Lower clamp applied to predictions before taking logarithms in BCE.
pub const BCE_EPS: f64 = 1e-7;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    Gather { table: ParamId, rows: Vec<usize> },
    MatMul(Var, Var),
    MatMulBt(Var, Var),
    Reshape(Var),
    Row(Var, usize),
    SelectRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    RepeatRows(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Sigmoid(Var),
    Relu(Var),
    Tanh(Var),
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    RowNorm(Var),
    NormRatio(Var, Var),
    Cosine(Var, Var),
    StopGradient,
    Bce { pred: Var, labels: Vec<f64> },
    Kl { target: Vec<f64>, q: Var },
}

#[derive(Debug)]
struct Node {
    rows: usize,
    cols: usize,
    value: Vec<f64>,
    op: Op,
    live: bool,
}

/// Gradient of one parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct ParamGrad {
    pub data: Vec<f64>,
    /// Rows written by embedding lookups; `None` for dense parameters.
    pub rows: Option<Vec<usize>>,
}

/// Parameter gradients produced by one backward pass.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Gradients {
    entries: BTreeMap<ParamId, ParamGrad>,
}

impl Gradients {
    pub fn get(&self, id: ParamId) -> Option<&ParamGrad> {
        self.entries.get(&id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &ParamGrad)> {
        self.entries.iter().map(|(k, v)| (*k, v))
    }

    pub fn insert(&mut self, id: ParamId, grad: ParamGrad) {
        self.entries.insert(id, grad);
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Result of [`Graph::backward`].
#[derive(Debug)]
pub struct Backward {
    node_grads: Vec<Option<Vec<f64>>>,
    params: Gradients,
}

impl Backward {
    /// Adjoint of a node, `None` when no gradient reached it.
    pub fn wrt(&self, v: Var) -> Option<&[f64]> {
        self.node_grads[v.0].as_deref()
    }

    /// Adjoint of a node with absent gradients materialized as zeros.
    pub fn wrt_dense(&self, graph: &Graph<'_>, v: Var) -> Vec<f64> {
        self.wrt(v)
            .map(<[f64]>::to_vec)
            .unwrap_or_else(|| vec![0.0; graph.value(v).len()])
    }

    pub fn params(&self) -> &Gradients {
        &self.params
    }

    pub fn into_params(self) -> Gradients {
        self.params
    }
}

/// Differentiation graph for one forward/backward pass.
pub struct Graph<'p> {
    store: Option<&'p ParamStore>,
    nodes: Vec<Node>,
    param_vars: BTreeMap<ParamId, Var>,
    frozen: BTreeSet<ParamGroup>,
    stop_values: Vec<Vec<f64>>,
    stop_replay: Option<Vec<Vec<f64>>>,
}

impl Default for Graph<'_> {
    fn default() -> Self {
        Self::new()
    }
}

impl<'p> Graph<'p> {
    pub fn new() -> Self {
        Graph {
            store: None,
            nodes: Vec::new(),
            param_vars: BTreeMap::new(),
            frozen: BTreeSet::new(),
            stop_values: Vec::new(),
            stop_replay: None,
        }
    }

    pub fn with_params(store: &'p ParamStore) -> Self {
        Graph {
            store: Some(store),
            ..Graph::new()
        }
    }

    /// Treat every parameter of `group` as a constant in this graph.
    pub fn freeze(&mut self, group: ParamGroup) -> &mut Self {
        self.frozen.insert(group);
        self
    }

    /// Values seen by each `stop_gradient` call, in call order.
    pub fn stop_values(&self) -> &[Vec<f64>] {
        &self.stop_values
    }

    /// Make the k-th `stop_gradient` call return `values[k]` instead of its
    /// input. Finite-difference oracles use this to hold blocked quantities
    /// at their unperturbed values.
    pub fn replay_stops(&mut self, values: Vec<Vec<f64>>) {
        self.stop_replay = Some(values);
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn dims(&self, v: Var) -> (usize, usize) {
        let n = &self.nodes[v.0];
        (n.rows, n.cols)
    }

    pub fn scalar(&self, v: Var) -> f64 {
        self.nodes[v.0].value[0]
    }

    pub fn tensor(&self, v: Var) -> Tensor {
        let n = &self.nodes[v.0];
        Tensor::matrix(n.rows, n.cols, n.value.clone()).expect("node shapes are valid")
    }

    pub fn is_live(&self, v: Var) -> bool {
        self.nodes[v.0].live
    }

    fn push(&mut self, rows: usize, cols: usize, value: Vec<f64>, op: Op, live: bool) -> Var {
        debug_assert_eq!(rows * cols, value.len());
        self.nodes.push(Node {
            rows,
            cols,
            value,
            op,
            live,
        });
        Var(self.nodes.len() - 1)
    }

    fn node(&self, v: Var) -> &Node {
        &self.nodes[v.0]
    }

    fn shape_of(&self, v: Var) -> [usize; 2] {
        let n = self.node(v);
        [n.rows, n.cols]
    }

    // ---- leaves ----------------------------------------------------------

    pub fn constant(&mut self, t: &Tensor) -> Var {
        self.input(t, false)
    }

    pub fn input(&mut self, t: &Tensor, requires_grad: bool) -> Var {
        let (r, c) = t.dims2();
        self.push(r, c, t.data().to_vec(), Op::Leaf, requires_grad)
    }

    pub fn constant_matrix(&mut self, rows: usize, cols: usize, data: Vec<f64>) -> Result<Var> {
        if rows * cols != data.len() || rows == 0 || cols == 0 {
            return Err(Error::shape("constant", &[rows, cols], &[data.len()]));
        }
        Ok(self.push(rows, cols, data, Op::Leaf, false))
    }

    pub fn zeros(&mut self, rows: usize, cols: usize) -> Var {
        self.push(rows, cols, vec![0.0; rows * cols], Op::Leaf, false)
    }

    fn store(&self) -> Result<&'p ParamStore> {
        self.store
            .ok_or_else(|| Error::Config("graph has no parameter store".into()))
    }

    /// Whole parameter tensor as a node. Repeated calls share one node.
    pub fn param(&mut self, id: ParamId) -> Result<Var> {
        if let Some(&v) = self.param_vars.get(&id) {
            return Ok(v);
        }
        let store = self.store()?;
        let p = store.get(id);
        let live = !self.frozen.contains(&p.group);
        let v = self.push(p.rows, p.cols, p.data.clone(), Op::Param(id), live);
        self.param_vars.insert(id, v);
        Ok(v)
    }

    /// Rows of an embedding table. Gradients flow to exactly those rows.
    pub fn gather(&mut self, id: ParamId, rows: &[usize]) -> Result<Var> {
        let store = self.store()?;
        let p = store.get(id);
        if rows.is_empty() {
            return Err(Error::shape("gather", &[p.rows, p.cols], &[0]));
        }
        let mut value = Vec::with_capacity(rows.len() * p.cols);
        for &r in rows {
            if r >= p.rows {
                return Err(Error::Lookup {
                    table: p.name.clone(),
                    rows: p.rows,
                    index: r,
                });
            }
            value.extend_from_slice(&p.data[r * p.cols..(r + 1) * p.cols]);
        }
        let live = !self.frozen.contains(&p.group);
        let cols = p.cols;
        Ok(self.push(
            rows.len(),
            cols,
            value,
            Op::Gather {
                table: id,
                rows: rows.to_vec(),
            },
            live,
        ))
    }

    // ---- linear algebra --------------------------------------------------

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.cols != nb.rows {
            return Err(Error::shape("matmul", &self.shape_of(a), &self.shape_of(b)));
        }
        let (r, k, c) = (na.rows, na.cols, nb.cols);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let arow = &na.value[i * k..(i + 1) * k];
            let orow = &mut out[i * c..(i + 1) * c];
            for (kk, &av) in arow.iter().enumerate() {
                if av == 0.0 {
                    continue;
                }
                let brow = &nb.value[kk * c..(kk + 1) * c];
                for (o, &bv) in orow.iter_mut().zip(brow) {
                    *o += av * bv;
                }
            }
        }
        let live = na.live || nb.live;
        Ok(self.push(r, c, out, Op::MatMul(a, b), live))
    }

    /// `a · bᵀ` for `a: r×k`, `b: c×k`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        let (na, nb) = (self.node(a), self.node(b));
        if na.cols != nb.cols {
            return Err(Error::shape("matmul_bt", &self.shape_of(a), &self.shape_of(b)));
        }
        let (r, k, c) = (na.rows, na.cols, nb.rows);
        let mut out = vec![0.0; r * c];
        for i in 0..r {
            let arow = &na.value[i * k..(i + 1) * k];
            for j in 0..c {
                let brow = &nb.value[j * k..(j + 1) * k];
                out[i * c + j] = dot(arow, brow);
            }
        }
        let live = na.live || nb.live;
        Ok(self.push(r, c, out, Op::MatMulBt(a, b), live))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let n = self.node(a);
        if rows * cols != n.value.len() {
            return Err(Error::shape("reshape", &self.shape_of(a), &[rows, cols]));
        }
        let (value, live) = (n.value.clone(), n.live);
        Ok(self.push(rows, cols, value, Op::Reshape(a), live))
    }

    pub fn row(&mut self, a: Var, i: usize) -> Result<Var> {
        let n = self.node(a);
        if i >= n.rows {
            return Err(Error::shape("row", &self.shape_of(a), &[i]));
        }
        let c = n.cols;
        let (value, live) = (n.value[i * c..(i + 1) * c].to_vec(), n.live);
        Ok(self.push(1, c, value, Op::Row(a, i), live))
    }

    /// Rows `idx` of `a`, in the given order (repeats allowed).
    pub fn select_rows(&mut self, a: Var, idx: &[usize]) -> Result<Var> {
        let n = self.node(a);
        if idx.is_empty() || idx.iter().any(|&i| i >= n.rows) {
            return Err(Error::shape("select_rows", &self.shape_of(a), &[idx.len()]));
        }
        let c = n.cols;
        let mut value = Vec::with_capacity(idx.len() * c);
        for &i in idx {
            value.extend_from_slice(&n.value[i * c..(i + 1) * c]);
        }
        let live = n.live;
        Ok(self.push(idx.len(), c, value, Op::SelectRows(a, idx.to_vec()), live))
    }

    pub fn slice_cols(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.node(a);
        if start + len > n.cols || len == 0 {
            return Err(Error::shape("slice_cols", &self.shape_of(a), &[start, len]));
        }
        let (r, c) = (n.rows, n.cols);
        let mut value = Vec::with_capacity(r * len);
        for i in 0..r {
            value.extend_from_slice(&n.value[i * c + start..i * c + start + len]);
        }
        let live = n.live;
        Ok(self.push(r, len, value, Op::SliceCols(a, start), live))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Domain("concat of nothing".into()))?;
        let rows = self.node(first).rows;
        for &p in parts {
            if self.node(p).rows != rows {
                return Err(Error::shape("concat_cols", &self.shape_of(first), &self.shape_of(p)));
            }
        }
        let cols: usize = parts.iter().map(|&p| self.node(p).cols).sum();
        let mut value = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for &p in parts {
                let n = self.node(p);
                value.extend_from_slice(&n.value[i * n.cols..(i + 1) * n.cols]);
            }
        }
        let live = parts.iter().any(|&p| self.node(p).live);
        Ok(self.push(rows, cols, value, Op::ConcatCols(parts.to_vec()), live))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        let first = *parts
            .first()
            .ok_or_else(|| Error::Domain("concat of nothing".into()))?;
        let cols = self.node(first).cols;
        for &p in parts {
            if self.node(p).cols != cols {
                return Err(Error::shape("concat_rows", &self.shape_of(first), &self.shape_of(p)));
            }
        }
        let rows: usize = parts.iter().map(|&p| self.node(p).rows).sum();
        let mut value = Vec::with_capacity(rows * cols);
        for &p in parts {
            value.extend_from_slice(&self.node(p).value);
        }
        let live = parts.iter().any(|&p| self.node(p).live);
        Ok(self.push(rows, cols, value, Op::ConcatRows(parts.to_vec()), live))
    }

    /// Tile a single row `n` times.
    pub fn repeat_rows(&mut self, a: Var, n: usize) -> Result<Var> {
        let node = self.node(a);
        if node.rows != 1 || n == 0 {
            return Err(Error::shape("repeat_rows", &self.shape_of(a), &[n]));
        }
        let c = node.cols;
        let value = node.value.repeat(n);
        let live = node.live;
        Ok(self.push(n, c, value, Op::RepeatRows(a), live))
    }

    // ---- elementwise -----------------------------------------------------

    fn same_shape(&self, op: &'static str, a: Var, b: Var) -> Result<()> {
        if self.shape_of(a) != self.shape_of(b) {
            return Err(Error::shape(op, &self.shape_of(a), &self.shape_of(b)));
        }
        Ok(())
    }

    fn zip_with(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Var {
        let (na, nb) = (self.node(a), self.node(b));
        let value = na.value.iter().zip(&nb.value).map(|(&x, &y)| f(x, y)).collect();
        let (r, c, live) = (na.rows, na.cols, na.live || nb.live);
        self.push(r, c, value, op, live)
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("add", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x + y, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("sub", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x - y, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("mul", a, b)?;
        Ok(self.zip_with(a, b, |x, y| x * y, Op::Mul(a, b)))
    }

    fn broadcast_row(&mut self, op_name: &'static str, a: Var, row: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (na, nr) = (self.node(a), self.node(row));
        if nr.rows != 1 || nr.cols != na.cols {
            return Err(Error::shape(op_name, &self.shape_of(a), &self.shape_of(row)));
        }
        let c = na.cols;
        let value = na
            .value
            .iter()
            .enumerate()
            .map(|(i, &x)| f(x, nr.value[i % c]))
            .collect();
        let (r, live) = (na.rows, na.live || nr.live);
        Ok(self.push(r, c, value, op, live))
    }

    /// `a + row` with `row: 1×c` broadcast over the rows of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.broadcast_row("add_row", a, row, |x, y| x + y, Op::AddRow(a, row))
    }

    /// `a ⊙ row` with `row: 1×c` broadcast over the rows of `a`.
    pub fn mul_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.broadcast_row("mul_row", a, row, |x, y| x * y, Op::MulRow(a, row))
    }

    /// Scale row `i` of `a` by `col[i]`, `col: r×1`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Result<Var> {
        let (na, nc) = (self.node(a), self.node(col));
        if nc.cols != 1 || nc.rows != na.rows {
            return Err(Error::shape("mul_col", &self.shape_of(a), &self.shape_of(col)));
        }
        let c = na.cols;
        let value = na
            .value
            .iter()
            .enumerate()
            .map(|(i, &x)| x * nc.value[i / c])
            .collect();
        let (r, live) = (na.rows, na.live || nc.live);
        Ok(self.push(r, c, value, Op::MulCol(a, col), live))
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let n = self.node(a);
        let value = n.value.iter().map(|&x| f(x)).collect();
        let (r, c, live) = (n.rows, n.cols, n.live);
        self.push(r, c, value, op, live)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x * s, Op::Scale(a, s))
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        self.map(a, |x| x + s, Op::AddScalar(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    /// NaN passes through so a poisoned input still surfaces in the loss.
    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x <= 0.0 { 0.0 } else { x }, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        self.map(a, f64::tanh, Op::Tanh(a))
    }

    /// Row-wise softmax. Columns with `mask[j] == false` get weight exactly 0.
    pub fn softmax(&mut self, a: Var, mask: Option<&[bool]>) -> Result<Var> {
        let n = self.node(a);
        let (r, c) = (n.rows, n.cols);
        if let Some(m) = mask {
            if m.len() != c {
                return Err(Error::shape("softmax mask", &[r, c], &[m.len()]));
            }
            if !m.iter().any(|&x| x) {
                return Err(Error::Domain("softmax with every position masked".into()));
            }
        }
        let mut value = vec![0.0; r * c];
        for i in 0..r {
            let row = &n.value[i * c..(i + 1) * c];
            let out = &mut value[i * c..(i + 1) * c];
            softmax_into(row, mask, out)?;
        }
        let live = n.live;
        Ok(self.push(r, c, value, Op::Softmax(a), live))
    }

    // ---- reductions ------------------------------------------------------

    pub fn sum(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s = n.value.iter().sum();
        let live = n.live;
        self.push(1, 1, vec![s], Op::Sum(a), live)
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let s = n.value.iter().sum::<f64>() / n.value.len() as f64;
        let live = n.live;
        self.push(1, 1, vec![s], Op::Mean(a), live)
    }

    /// Euclidean norm of each row, `r×1`.
    pub fn row_norm(&mut self, a: Var) -> Var {
        let n = self.node(a);
        let c = n.cols;
        let value = n.value.chunks(c).map(|row| dot(row, row).sqrt()).collect();
        let (r, live) = (n.rows, n.live);
        self.push(r, 1, value, Op::RowNorm(a), live)
    }

    /// Per-row `‖a_i‖ / (‖a_i‖ + ‖b_i‖)`; rows where both norms vanish get 0.5
    /// and contribute no gradient.
    pub fn norm_ratio(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("norm_ratio", a, b)?;
        let (na, nb) = (self.node(a), self.node(b));
        let c = na.cols;
        let value = na
            .value
            .chunks(c)
            .zip(nb.value.chunks(c))
            .map(|(x, y)| norm_ratio(dot(x, x).sqrt(), dot(y, y).sqrt()))
            .collect();
        let (r, live) = (na.rows, na.live || nb.live);
        Ok(self.push(r, 1, value, Op::NormRatio(a, b), live))
    }

    /// Cosine similarity of two equally shaped tensors, flattened.
    pub fn cosine(&mut self, a: Var, b: Var) -> Result<Var> {
        self.same_shape("cosine", a, b)?;
        let c = cosine_similarity(self.value(a), self.value(b))?;
        let live = self.node(a).live || self.node(b).live;
        Ok(self.push(1, 1, vec![c], Op::Cosine(a, b), live))
    }

    /// Identity in the forward pass, zero adjoint for `a` in the backward pass.
    pub fn stop_gradient(&mut self, a: Var) -> Result<Var> {
        let n = self.node(a);
        let (r, c) = (n.rows, n.cols);
        let value = match &self.stop_replay {
            Some(replay) => {
                let k = self.stop_values.len();
                let v = replay
                    .get(k)
                    .ok_or_else(|| Error::Domain("stop-gradient replay exhausted".into()))?;
                if v.len() != r * c {
                    return Err(Error::shape("stop_gradient replay", &[r, c], &[v.len()]));
                }
                v.clone()
            }
            None => n.value.clone(),
        };
        self.stop_values.push(value.clone());
        Ok(self.push(r, c, value, Op::StopGradient, false))
    }

    // ---- losses ----------------------------------------------------------

    /// Mean binary cross-entropy of predictions in (0,1) against 0/1 labels.
    pub fn bce(&mut self, pred: Var, labels: &[f64]) -> Result<Var> {
        let n = self.node(pred);
        if labels.len() != n.value.len() {
            return Err(Error::shape("bce", &self.shape_of(pred), &[labels.len()]));
        }
        // a diverged prediction yields a NaN loss for the caller to report
        let loss = if n.value.iter().all(|p| p.is_finite()) {
            bce_mean(&n.value, labels)?
        } else if let Some(&y) = labels.iter().find(|&&y| y != 0.0 && y != 1.0) {
            return Err(Error::Label(y));
        } else {
            f64::NAN
        };
        let live = n.live;
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::Bce {
                pred,
                labels: labels.to_vec(),
            },
            live,
        ))
    }

    /// Mean over rows of `KL(target_i ‖ q_i)`; `target` is row-major with the
    /// shape of `q`.
    pub fn kl(&mut self, target: &[f64], q: Var) -> Result<Var> {
        let n = self.node(q);
        if target.len() != n.value.len() {
            return Err(Error::shape("kl", &self.shape_of(q), &[target.len()]));
        }
        let c = n.cols;
        let mut total = 0.0;
        for (p, qq) in target.chunks(c).zip(n.value.chunks(c)) {
            if qq.iter().any(|x| !x.is_finite()) {
                total = f64::NAN;
                break;
            }
            total += kl_divergence(p, qq)?;
        }
        let loss = total / n.rows as f64;
        let live = n.live;
        Ok(self.push(
            1,
            1,
            vec![loss],
            Op::Kl {
                target: target.to_vec(),
                q,
            },
            live,
        ))
    }

    // ---- backward --------------------------------------------------------

    /// Reverse sweep from a scalar `loss` node.
    pub fn backward(&self, loss: Var) -> Result<Backward> {
        let ln = self.node(loss);
        if ln.rows * ln.cols != 1 {
            return Err(Error::shape("backward", &self.shape_of(loss), &[1, 1]));
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        let mut params = BTreeMap::<ParamId, ParamGrad>::new();
        let mut touched = BTreeMap::<ParamId, BTreeSet<usize>>::new();
        if ln.live {
            grads[loss.0] = Some(vec![1.0]);
        }

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &self.nodes[i];
            self.propagate(node, &g, &mut grads, &mut params, &mut touched);
            grads[i] = Some(g);
        }

        for (id, rows) in touched {
            if let Some(pg) = params.get_mut(&id) {
                pg.rows = Some(rows.into_iter().collect());
            }
        }
        Ok(Backward {
            node_grads: grads,
            params: Gradients { entries: params },
        })
    }

    fn propagate(
        &self,
        node: &Node,
        g: &[f64],
        grads: &mut [Option<Vec<f64>>],
        params: &mut BTreeMap<ParamId, ParamGrad>,
        touched: &mut BTreeMap<ParamId, BTreeSet<usize>>,
    ) {
        let nodes = &self.nodes;
        match &node.op {
            Op::Leaf | Op::StopGradient => {}
            Op::Param(id) => {
                let pg = params.entry(*id).or_insert_with(|| ParamGrad {
                    data: vec![0.0; g.len()],
                    rows: None,
                });
                axpy(&mut pg.data, 1.0, g);
            }
            Op::Gather { table, rows } => {
                let store = self.store.expect("gather implies a store");
                let p = store.get(*table);
                debug_assert_eq!(p.kind, ParamKind::Table);
                let c = p.cols;
                let pg = params.entry(*table).or_insert_with(|| ParamGrad {
                    data: vec![0.0; p.rows * p.cols],
                    rows: None,
                });
                let set = touched.entry(*table).or_default();
                for (k, &r) in rows.iter().enumerate() {
                    axpy(&mut pg.data[r * c..(r + 1) * c], 1.0, &g[k * c..(k + 1) * c]);
                    set.insert(r);
                }
            }
            Op::MatMul(a, b) => {
                let (na, nb) = (&nodes[a.0], &nodes[b.0]);
                let (r, k, c) = (na.rows, na.cols, nb.cols);
                if let Some(da) = slot(grads, nodes, *a) {
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for kk in 0..k {
                            da[i * k + kk] += dot(grow, &nb.value[kk * c..(kk + 1) * c]);
                        }
                    }
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    for i in 0..r {
                        let grow = &g[i * c..(i + 1) * c];
                        for kk in 0..k {
                            let av = na.value[i * k + kk];
                            if av != 0.0 {
                                axpy(&mut db[kk * c..(kk + 1) * c], av, grow);
                            }
                        }
                    }
                }
            }
            Op::MatMulBt(a, b) => {
                let (na, nb) = (&nodes[a.0], &nodes[b.0]);
                let (r, k, c) = (na.rows, na.cols, nb.rows);
                if let Some(da) = slot(grads, nodes, *a) {
                    for i in 0..r {
                        for j in 0..c {
                            let gv = g[i * c + j];
                            if gv != 0.0 {
                                axpy(&mut da[i * k..(i + 1) * k], gv, &nb.value[j * k..(j + 1) * k]);
                            }
                        }
                    }
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    for i in 0..r {
                        for j in 0..c {
                            let gv = g[i * c + j];
                            if gv != 0.0 {
                                axpy(&mut db[j * k..(j + 1) * k], gv, &na.value[i * k..(i + 1) * k]);
                            }
                        }
                    }
                }
            }
            Op::Reshape(a) | Op::AddScalar(a) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    axpy(da, 1.0, g);
                }
            }
            Op::Row(a, i) => {
                let c = node.cols;
                if let Some(da) = slot(grads, nodes, *a) {
                    axpy(&mut da[i * c..(i + 1) * c], 1.0, g);
                }
            }
            Op::SelectRows(a, idx) => {
                let c = node.cols;
                if let Some(da) = slot(grads, nodes, *a) {
                    for (k, &i) in idx.iter().enumerate() {
                        axpy(&mut da[i * c..(i + 1) * c], 1.0, &g[k * c..(k + 1) * c]);
                    }
                }
            }
            Op::SliceCols(a, start) => {
                let (len, ac) = (node.cols, nodes[a.0].cols);
                if let Some(da) = slot(grads, nodes, *a) {
                    for i in 0..node.rows {
                        axpy(
                            &mut da[i * ac + start..i * ac + start + len],
                            1.0,
                            &g[i * len..(i + 1) * len],
                        );
                    }
                }
            }
            Op::ConcatCols(parts) => {
                let total = node.cols;
                let mut offset = 0;
                for p in parts {
                    let pc = nodes[p.0].cols;
                    if let Some(dp) = slot(grads, nodes, *p) {
                        for i in 0..node.rows {
                            axpy(
                                &mut dp[i * pc..(i + 1) * pc],
                                1.0,
                                &g[i * total + offset..i * total + offset + pc],
                            );
                        }
                    }
                    offset += pc;
                }
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let len = nodes[p.0].value.len();
                    if let Some(dp) = slot(grads, nodes, *p) {
                        axpy(dp, 1.0, &g[offset..offset + len]);
                    }
                    offset += len;
                }
            }
            Op::RepeatRows(a) => {
                let c = node.cols;
                if let Some(da) = slot(grads, nodes, *a) {
                    for chunk in g.chunks(c) {
                        axpy(da, 1.0, chunk);
                    }
                }
            }
            Op::Add(a, b) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    axpy(da, 1.0, g);
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    axpy(db, 1.0, g);
                }
            }
            Op::Sub(a, b) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    axpy(da, 1.0, g);
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    axpy(db, -1.0, g);
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((d, &gv), &y) in da.iter_mut().zip(g).zip(vb) {
                        *d += gv * y;
                    }
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    for ((d, &gv), &x) in db.iter_mut().zip(g).zip(va) {
                        *d += gv * x;
                    }
                }
            }
            Op::AddRow(a, row) => {
                let c = node.cols;
                if let Some(da) = slot(grads, nodes, *a) {
                    axpy(da, 1.0, g);
                }
                if let Some(dr) = slot(grads, nodes, *row) {
                    for chunk in g.chunks(c) {
                        axpy(dr, 1.0, chunk);
                    }
                }
            }
            Op::MulRow(a, row) => {
                let c = node.cols;
                let (va, vr) = (&nodes[a.0].value, &nodes[row.0].value);
                if let Some(da) = slot(grads, nodes, *a) {
                    for (i, (d, &gv)) in da.iter_mut().zip(g).enumerate() {
                        *d += gv * vr[i % c];
                    }
                }
                if let Some(dr) = slot(grads, nodes, *row) {
                    for (i, (&gv, &x)) in g.iter().zip(va).enumerate() {
                        dr[i % c] += gv * x;
                    }
                }
            }
            Op::MulCol(a, col) => {
                let c = node.cols;
                let (va, vc) = (&nodes[a.0].value, &nodes[col.0].value);
                if let Some(da) = slot(grads, nodes, *a) {
                    for (i, (d, &gv)) in da.iter_mut().zip(g).enumerate() {
                        *d += gv * vc[i / c];
                    }
                }
                if let Some(dc) = slot(grads, nodes, *col) {
                    for (i, (&gv, &x)) in g.iter().zip(va).enumerate() {
                        dc[i / c] += gv * x;
                    }
                }
            }
            Op::Scale(a, s) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    axpy(da, *s, g);
                }
            }
            Op::Sigmoid(a) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((d, &gv), &y) in da.iter_mut().zip(g).zip(&node.value) {
                        *d += gv * y * (1.0 - y);
                    }
                }
            }
            Op::Relu(a) => {
                let va = &nodes[a.0].value;
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((d, &gv), &x) in da.iter_mut().zip(g).zip(va) {
                        if x > 0.0 {
                            *d += gv;
                        }
                    }
                }
            }
            Op::Tanh(a) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((d, &gv), &y) in da.iter_mut().zip(g).zip(&node.value) {
                        *d += gv * (1.0 - y * y);
                    }
                }
            }
            Op::Softmax(a) => {
                let c = node.cols;
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((drow, grow), yrow) in da.chunks_mut(c).zip(g.chunks(c)).zip(node.value.chunks(c)) {
                        let inner = dot(grow, yrow);
                        for ((d, &gv), &y) in drow.iter_mut().zip(grow).zip(yrow) {
                            *d += y * (gv - inner);
                        }
                    }
                }
            }
            Op::Sum(a) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    da.iter_mut().for_each(|d| *d += g[0]);
                }
            }
            Op::Mean(a) => {
                if let Some(da) = slot(grads, nodes, *a) {
                    let s = g[0] / da.len() as f64;
                    da.iter_mut().for_each(|d| *d += s);
                }
            }
            Op::RowNorm(a) => {
                let va = &nodes[a.0].value;
                let c = nodes[a.0].cols;
                if let Some(da) = slot(grads, nodes, *a) {
                    for (i, (drow, xrow)) in da.chunks_mut(c).zip(va.chunks(c)).enumerate() {
                        let norm = node.value[i];
                        if norm > 0.0 {
                            axpy(drow, g[i] / norm, xrow);
                        }
                    }
                }
            }
            Op::NormRatio(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let c = nodes[a.0].cols;
                let rows = node.rows;
                let mut coeffs = Vec::with_capacity(rows);
                for i in 0..rows {
                    let (x, y) = (&va[i * c..(i + 1) * c], &vb[i * c..(i + 1) * c]);
                    let (nx, ny) = (dot(x, x).sqrt(), dot(y, y).sqrt());
                    let s = nx + ny;
                    if s == 0.0 {
                        coeffs.push((0.0, 0.0));
                    } else {
                        // d/dnx = ny/s², d/dny = -nx/s²; then d‖x‖/dx = x/‖x‖
                        let cx = if nx > 0.0 { g[i] * ny / (s * s) / nx } else { 0.0 };
                        let cy = if ny > 0.0 { -g[i] * nx / (s * s) / ny } else { 0.0 };
                        coeffs.push((cx, cy));
                    }
                }
                if let Some(da) = slot(grads, nodes, *a) {
                    for (i, &(cx, _)) in coeffs.iter().enumerate() {
                        axpy(&mut da[i * c..(i + 1) * c], cx, &va[i * c..(i + 1) * c]);
                    }
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    for (i, &(_, cy)) in coeffs.iter().enumerate() {
                        axpy(&mut db[i * c..(i + 1) * c], cy, &vb[i * c..(i + 1) * c]);
                    }
                }
            }
            Op::Cosine(a, b) => {
                let (va, vb) = (&nodes[a.0].value, &nodes[b.0].value);
                let (na2, nb2) = (dot(va, va), dot(vb, vb));
                let (nx, ny) = (na2.sqrt(), nb2.sqrt());
                let cos = node.value[0];
                if let Some(da) = slot(grads, nodes, *a) {
                    for ((d, &x), &y) in da.iter_mut().zip(va).zip(vb) {
                        *d += g[0] * (y / (nx * ny) - cos * x / na2);
                    }
                }
                if let Some(db) = slot(grads, nodes, *b) {
                    for ((d, &x), &y) in db.iter_mut().zip(va).zip(vb) {
                        *d += g[0] * (x / (nx * ny) - cos * y / nb2);
                    }
                }
            }
            Op::Bce { pred, labels } => {
                let vp = &nodes[pred.0].value;
                let count = vp.len() as f64;
                if let Some(dp) = slot(grads, nodes, *pred) {
                    for ((d, &p), &y) in dp.iter_mut().zip(vp).zip(labels) {
                        if (BCE_EPS..=1.0 - BCE_EPS).contains(&p) {
                            *d += g[0] * (-(y / p) + (1.0 - y) / (1.0 - p)) / count;
                        }
                    }
                }
            }
            Op::Kl { target, q } => {
                let vq = &nodes[q.0].value;
                let rows = nodes[q.0].rows as f64;
                if let Some(dq) = slot(grads, nodes, *q) {
                    for ((d, &p), &qq) in dq.iter_mut().zip(target).zip(vq) {
                        if p > 0.0 {
                            *d -= g[0] * p / qq / rows;
                        }
                    }
                }
            }
        }
    }
}

fn slot<'a>(grads: &'a mut [Option<Vec<f64>>], nodes: &[Node], v: Var) -> Option<&'a mut Vec<f64>> {
    let n = &nodes[v.0];
    if !n.live {
        return None;
    }
    Some(grads[v.0].get_or_insert_with(|| vec![0.0; n.value.len()]))
}

// ---- shared scalar kernels ------------------------------------------------

#[inline]
pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent accumulators let the compiler vectorize the loop
    let n = a.len().min(b.len());
    let (a, b) = (&a[..n], &b[..n]);
    let mut acc = [0.0; 4];
    let mut ca = a.chunks_exact(4);
    let mut cb = b.chunks_exact(4);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    (acc[0] + acc[2]) + (acc[1] + acc[3]) + tail
}

#[inline]
fn axpy(y: &mut [f64], a: f64, x: &[f64]) {
    for (yy, &xx) in y.iter_mut().zip(x) {
        *yy += a * xx;
    }
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn norm_ratio(nx: f64, ny: f64) -> f64 {
    let s = nx + ny;
    if s == 0.0 {
        0.5
    } else {
        nx / s
    }
}

fn softmax_into(row: &[f64], mask: Option<&[bool]>, out: &mut [f64]) -> Result<()> {
    if row.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericInput("softmax"));
    }
    let valid = |j: usize| mask.is_none_or(|m| m[j]);
    let max = row
        .iter()
        .enumerate()
        .filter(|&(j, _)| valid(j))
        .map(|(_, &x)| x)
        .fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for (j, (o, &x)) in out.iter_mut().zip(row).enumerate() {
        *o = if valid(j) { (x - max).exp() } else { 0.0 };
        total += *o;
    }
    out.iter_mut().for_each(|o| *o /= total);
    Ok(())
}

/// Numerically stabilized softmax of a vector.
pub fn softmax(v: &[f64]) -> Result<Vec<f64>> {
    if v.is_empty() {
        return Err(Error::shape("softmax", &[0], &[1]));
    }
    let mut out = vec![0.0; v.len()];
    softmax_into(v, None, &mut out)?;
    Ok(out)
}

/// `Σ p_i ln(p_i / q_i)` with `0 · ln 0 = 0`.
pub fn kl_divergence(p: &[f64], q: &[f64]) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::shape("kl_divergence", &[p.len()], &[q.len()]));
    }
    let mut total = 0.0;
    for (&pi, &qi) in p.iter().zip(q) {
        if qi <= 0.0 || !qi.is_finite() {
            return Err(Error::Domain(format!("kl_divergence: q entry {qi} is not positive")));
        }
        if pi < 0.0 || !pi.is_finite() {
            return Err(Error::Domain(format!("kl_divergence: p entry {pi} is not a probability")));
        }
        if pi > 0.0 {
            total += pi * (pi / qi).ln();
        }
    }
    Ok(total)
}

/// Binary cross-entropy of one prediction, with the prediction clamped to
/// `[BCE_EPS, 1 - BCE_EPS]`.
pub fn bce_loss(pred: f64, label: f64) -> Result<f64> {
    if label != 0.0 && label != 1.0 {
        return Err(Error::Label(label));
    }
    if !pred.is_finite() {
        return Err(Error::NumericInput("bce_loss"));
    }
    let p = pred.clamp(BCE_EPS, 1.0 - BCE_EPS);
    Ok(-(label * p.ln() + (1.0 - label) * (1.0 - p).ln()))
}

fn bce_mean(preds: &[f64], labels: &[f64]) -> Result<f64> {
    let mut total = 0.0;
    for (&p, &y) in preds.iter().zip(labels) {
        total += bce_loss(p, y)?;
    }
    Ok(total / preds.len() as f64)
}

pub fn cosine_similarity(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(Error::shape("cosine_similarity", &[u.len()], &[v.len()]));
    }
    let (nu, nv) = (dot(u, u).sqrt(), dot(v, v).sqrt());
    if nu == 0.0 || nv == 0.0 {
        return Err(Error::DegenerateVector("cosine_similarity of a zero vector"));
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}
