//! Reverse-mode automatic differentiation over dense `f64` matrices.
//!
//! A [`Tape`] records operations eagerly: every recorded node stores its forward
//! data, and [`Tape::backward`] replays the tape in reverse to produce exact
//! gradients with respect to the parameter leaves. Spatial derivatives never pass
//! through here; finite-difference stencils enter as constant sparse maps.
//!
//! Shapes are `(rows, cols)`; scalars are `1 x 1`.

mod gradcheck;

pub use gradcheck::{grad_check, grad_check_with, GradCheckReport};

use std::sync::Arc;

use crate::linalg::{gemm, CsrMatrix, MatRef, Matrix};

/// Handle to a node on a [`Tape`]. Cheap to copy; carries the node's shape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    id: usize,
    rows: usize,
    cols: usize,
}

impl Var {
    pub fn id(self) -> usize {
        self.id
    }

    pub fn shape(self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(self) -> bool {
        self.len() == 0
    }

    pub fn is_scalar(self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

/// Operation kinds that can be recorded on a tape.
#[derive(Clone, Debug)]
pub enum OpKind {
    /// `(m x k) . (k x n)`
    MatMul,
    Add,
    Sub,
    /// Adds a `1 x c` row to every row of an `r x c` matrix.
    AddRow,
    /// Elementwise product.
    Mul,
    Tanh,
    Logistic,
    Exp,
    Square,
    /// `max(x, 0)`, subgradient 0 at 0.
    Relu,
    Recip,
    Scale(f64),
    Offset(f64),
    Sum,
    Mean,
    Column(usize),
    Rows { start: usize, len: usize },
    /// Left multiplication by a constant dense matrix.
    DenseMap(Arc<Matrix>),
    /// Left multiplication by a constant sparse matrix, column by column.
    SparseMap(Arc<CsrMatrix>),
}

impl OpKind {
    pub fn name(&self) -> &'static str {
        match self {
            OpKind::MatMul => "matmul",
            OpKind::Add => "add",
            OpKind::Sub => "sub",
            OpKind::AddRow => "add_row",
            OpKind::Mul => "mul",
            OpKind::Tanh => "tanh",
            OpKind::Logistic => "logistic",
            OpKind::Exp => "exp",
            OpKind::Square => "square",
            OpKind::Relu => "relu",
            OpKind::Recip => "recip",
            OpKind::Scale(_) => "scale",
            OpKind::Offset(_) => "offset",
            OpKind::Sum => "sum",
            OpKind::Mean => "mean",
            OpKind::Column(_) => "column",
            OpKind::Rows { .. } => "rows",
            OpKind::DenseMap(_) => "dense_map",
            OpKind::SparseMap(_) => "sparse_map",
        }
    }

    fn arity(&self) -> usize {
        match self {
            OpKind::MatMul | OpKind::Add | OpKind::Sub | OpKind::AddRow | OpKind::Mul => 2,
            _ => 1,
        }
    }
}

#[derive(Debug, thiserror::Error, Clone, PartialEq)]
pub enum AutodiffError {
    #[error("{op}: incompatible input shapes {shapes:?}")]
    ShapeMismatch { op: &'static str, shapes: Vec<(usize, usize)> },
    #[error("{op}: expected {expected} inputs, got {got}")]
    Arity { op: &'static str, expected: usize, got: usize },
    #[error("backward requires a scalar loss, got shape {0:?}")]
    NonScalarLoss((usize, usize)),
    #[error("variable {0} does not belong to this tape")]
    ForeignVar(usize),
    #[error("non-finite function value at component {index} (value {value})")]
    NonFinite { index: usize, value: f64 },
}

#[derive(Clone, Debug)]
enum NodeKind {
    Leaf { param: Option<usize> },
    Op { kind: OpKind, inputs: [usize; 2] },
}

#[derive(Clone, Debug)]
struct Node {
    kind: NodeKind,
    rows: usize,
    cols: usize,
    needs_grad: bool,
    data: Vec<f64>,
}

/// Append-only record of a forward computation.
#[derive(Default, Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    params: Vec<usize>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Drops all nodes and parameters, keeping allocations.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.params.clear();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    fn push(&mut self, kind: NodeKind, rows: usize, cols: usize, needs_grad: bool, data: Vec<f64>) -> Var {
        debug_assert_eq!(rows * cols, data.len());
        let id = self.nodes.len();
        self.nodes.push(Node { kind, rows, cols, needs_grad, data });
        Var { id, rows, cols }
    }

    /// Registers a trainable leaf. Parameters are numbered in creation order.
    pub fn param(&mut self, data: Vec<f64>, rows: usize, cols: usize) -> Var {
        assert_eq!(rows * cols, data.len(), "param data does not match its shape");
        let index = self.params.len();
        self.params.push(self.nodes.len());
        self.push(NodeKind::Leaf { param: Some(index) }, rows, cols, true, data)
    }

    pub fn constant(&mut self, data: Vec<f64>, rows: usize, cols: usize) -> Var {
        assert_eq!(rows * cols, data.len(), "constant data does not match its shape");
        self.push(NodeKind::Leaf { param: None }, rows, cols, false, data)
    }

    pub fn scalar(&mut self, v: f64) -> Var {
        self.constant(vec![v], 1, 1)
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.id].data
    }

    pub fn scalar_value(&self, v: Var) -> f64 {
        assert!(v.is_scalar(), "scalar_value on shape {:?}", v.shape());
        self.nodes[v.id].data[0]
    }

    fn check(&self, v: Var) -> Result<(), AutodiffError> {
        match self.nodes.get(v.id) {
            Some(n) if n.rows == v.rows && n.cols == v.cols => Ok(()),
            _ => Err(AutodiffError::ForeignVar(v.id)),
        }
    }

    /// Records `kind` applied to `inputs`, computing its forward value eagerly.
    pub fn record(&mut self, kind: OpKind, inputs: &[Var]) -> Result<Var, AutodiffError> {
        if inputs.len() != kind.arity() {
            return Err(AutodiffError::Arity { op: kind.name(), expected: kind.arity(), got: inputs.len() });
        }
        for &v in inputs {
            self.check(v)?;
        }
        let mismatch = || AutodiffError::ShapeMismatch {
            op: kind.name(),
            shapes: inputs.iter().map(|v| v.shape()).collect(),
        };
        let a = inputs[0];
        let b = inputs.get(1).copied().unwrap_or(a);
        let (rows, cols, data) = match &kind {
            OpKind::MatMul => {
                if a.cols != b.rows {
                    return Err(mismatch());
                }
                let mut out = vec![0.0; a.rows * b.cols];
                gemm(
                    a.rows,
                    a.cols,
                    b.cols,
                    1.0,
                    MatRef::new(self.value(a), a.cols, false),
                    MatRef::new(self.value(b), b.cols, false),
                    0.0,
                    &mut out,
                );
                (a.rows, b.cols, out)
            }
            OpKind::Add | OpKind::Sub | OpKind::Mul => {
                if a.shape() != b.shape() {
                    return Err(mismatch());
                }
                let (x, y) = (self.value(a), self.value(b));
                let out = match kind {
                    OpKind::Add => x.iter().zip(y).map(|(p, q)| p + q).collect(),
                    OpKind::Sub => x.iter().zip(y).map(|(p, q)| p - q).collect(),
                    _ => x.iter().zip(y).map(|(p, q)| p * q).collect(),
                };
                (a.rows, a.cols, out)
            }
            OpKind::AddRow => {
                if b.rows != 1 || b.cols != a.cols {
                    return Err(mismatch());
                }
                let row = self.value(b);
                let mut out = self.value(a).to_vec();
                if a.cols > 0 {
                    for chunk in out.chunks_exact_mut(a.cols) {
                        for (o, r) in chunk.iter_mut().zip(row) {
                            *o += r;
                        }
                    }
                }
                (a.rows, a.cols, out)
            }
            OpKind::Tanh
            | OpKind::Logistic
            | OpKind::Exp
            | OpKind::Square
            | OpKind::Relu
            | OpKind::Recip
            | OpKind::Scale(_)
            | OpKind::Offset(_) => {
                let x = self.value(a);
                let out: Vec<f64> = match kind {
                    OpKind::Tanh => x.iter().map(|v| v.tanh()).collect(),
                    OpKind::Logistic => x.iter().map(|&v| logistic(v)).collect(),
                    OpKind::Exp => x.iter().map(|v| v.exp()).collect(),
                    OpKind::Square => x.iter().map(|v| v * v).collect(),
                    OpKind::Relu => x.iter().map(|&v| if v > 0.0 { v } else { 0.0 }).collect(),
                    OpKind::Recip => x.iter().map(|v| 1.0 / v).collect(),
                    OpKind::Scale(s) => x.iter().map(|v| v * s).collect(),
                    OpKind::Offset(s) => x.iter().map(|v| v + s).collect(),
                    _ => unreachable!(),
                };
                (a.rows, a.cols, out)
            }
            OpKind::Sum => (1, 1, vec![self.value(a).iter().sum()]),
            OpKind::Mean => {
                if a.is_empty() {
                    return Err(mismatch());
                }
                (1, 1, vec![self.value(a).iter().sum::<f64>() / a.len() as f64])
            }
            OpKind::Column(j) => {
                if *j >= a.cols {
                    return Err(mismatch());
                }
                let x = self.value(a);
                let out = (0..a.rows).map(|r| x[r * a.cols + j]).collect();
                (a.rows, 1, out)
            }
            OpKind::Rows { start, len } => {
                if start + len > a.rows {
                    return Err(mismatch());
                }
                let out = self.value(a)[start * a.cols..(start + len) * a.cols].to_vec();
                (*len, a.cols, out)
            }
            OpKind::DenseMap(m) => {
                if m.cols() != a.rows {
                    return Err(AutodiffError::ShapeMismatch {
                        op: kind.name(),
                        shapes: vec![(m.rows(), m.cols()), a.shape()],
                    });
                }
                let mut out = vec![0.0; m.rows() * a.cols];
                gemm(
                    m.rows(),
                    m.cols(),
                    a.cols,
                    1.0,
                    MatRef::new(m.data(), m.cols(), false),
                    MatRef::new(self.value(a), a.cols, false),
                    0.0,
                    &mut out,
                );
                (m.rows(), a.cols, out)
            }
            OpKind::SparseMap(s) => {
                if s.cols() != a.rows {
                    return Err(AutodiffError::ShapeMismatch {
                        op: kind.name(),
                        shapes: vec![(s.rows(), s.cols()), a.shape()],
                    });
                }
                let mut out = vec![0.0; s.rows() * a.cols];
                let x = self.value(a);
                for c in 0..a.cols {
                    s.apply_strided(x, a.cols, c, &mut out, a.cols, c);
                }
                (s.rows(), a.cols, out)
            }
        };
        let needs_grad = inputs.iter().any(|v| self.nodes[v.id].needs_grad);
        let ids = [a.id, b.id];
        Ok(self.push(NodeKind::Op { kind, inputs: ids }, rows, cols, needs_grad, data))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::MatMul, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Add, &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Sub, &[a, b])
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::AddRow, &[a, row])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Mul, &[a, b])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Tanh, &[a])
    }

    pub fn logistic(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Logistic, &[a])
    }

    pub fn exp(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Exp, &[a])
    }

    pub fn square(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Square, &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Relu, &[a])
    }

    pub fn recip(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Recip, &[a])
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        self.record(OpKind::Scale(s), &[a])
    }

    pub fn offset(&mut self, a: Var, s: f64) -> Result<Var, AutodiffError> {
        self.record(OpKind::Offset(s), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Sum, &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::Mean, &[a])
    }

    pub fn column(&mut self, a: Var, j: usize) -> Result<Var, AutodiffError> {
        self.record(OpKind::Column(j), &[a])
    }

    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var, AutodiffError> {
        self.record(OpKind::Rows { start, len }, &[a])
    }

    pub fn dense_map(&mut self, m: &Arc<Matrix>, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::DenseMap(Arc::clone(m)), &[a])
    }

    pub fn sparse_map(&mut self, s: &Arc<CsrMatrix>, a: Var) -> Result<Var, AutodiffError> {
        self.record(OpKind::SparseMap(Arc::clone(s)), &[a])
    }

    /// Exact gradients of the scalar `loss` with respect to every parameter leaf.
    pub fn backward(&self, loss: Var) -> Result<GradientMap, AutodiffError> {
        self.check(loss)?;
        if !loss.is_scalar() {
            return Err(AutodiffError::NonScalarLoss(loss.shape()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = vec![None; loss.id + 1];
        adj[loss.id] = Some(vec![1.0]);
        let mut grads: Vec<Vec<f64>> =
            self.params.iter().map(|&id| vec![0.0; self.nodes[id].data.len()]).collect();

        for id in (0..=loss.id).rev() {
            let Some(g) = adj[id].take() else { continue };
            let node = &self.nodes[id];
            match &node.kind {
                NodeKind::Leaf { param: Some(p) } => {
                    for (dst, src) in grads[*p].iter_mut().zip(&g) {
                        *dst += src;
                    }
                }
                NodeKind::Leaf { param: None } => {}
                NodeKind::Op { kind, inputs } => self.backprop_op(node, kind, *inputs, &g, &mut adj),
            }
        }
        let shapes = self.params.iter().map(|&id| (self.nodes[id].rows, self.nodes[id].cols)).collect();
        Ok(GradientMap { grads, shapes })
    }

    fn backprop_op(&self, node: &Node, kind: &OpKind, inputs: [usize; 2], g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let [ia, ib] = inputs;
        let na = &self.nodes[ia];
        let nb = &self.nodes[ib];
        let want_a = na.needs_grad;
        let want_b = kind.arity() == 2 && nb.needs_grad;
        match kind {
            OpKind::MatMul => {
                let (m, k, n) = (na.rows, na.cols, nb.cols);
                if want_a {
                    let da = slot(adj, ia, m * k);
                    // dA += dC . B^T
                    gemm(m, n, k, 1.0, MatRef::new(g, n, false), MatRef::new(&nb.data, n, true), 1.0, da);
                }
                if want_b {
                    let db = slot(adj, ib, k * n);
                    // dB += A^T . dC
                    gemm(k, m, n, 1.0, MatRef::new(&na.data, k, true), MatRef::new(g, n, false), 1.0, db);
                }
            }
            OpKind::Add | OpKind::Sub => {
                if want_a {
                    axpy(slot(adj, ia, g.len()), 1.0, g);
                }
                if want_b {
                    let s = if matches!(kind, OpKind::Sub) { -1.0 } else { 1.0 };
                    axpy(slot(adj, ib, g.len()), s, g);
                }
            }
            OpKind::AddRow => {
                if want_a {
                    axpy(slot(adj, ia, g.len()), 1.0, g);
                }
                if want_b && na.cols > 0 {
                    let dr = slot(adj, ib, na.cols);
                    for chunk in g.chunks_exact(na.cols) {
                        for (d, v) in dr.iter_mut().zip(chunk) {
                            *d += v;
                        }
                    }
                }
            }
            OpKind::Mul => {
                if want_a {
                    let da = slot(adj, ia, g.len());
                    for ((d, gi), bi) in da.iter_mut().zip(g).zip(&nb.data) {
                        *d += gi * bi;
                    }
                }
                if want_b {
                    let db = slot(adj, ib, g.len());
                    for ((d, gi), ai) in db.iter_mut().zip(g).zip(&na.data) {
                        *d += gi * ai;
                    }
                }
            }
            OpKind::Tanh | OpKind::Logistic | OpKind::Exp | OpKind::Recip => {
                if want_a {
                    let da = slot(adj, ia, g.len());
                    let y = &node.data;
                    match kind {
                        OpKind::Tanh => zip3(da, g, y, |gi, yi| gi * (1.0 - yi * yi)),
                        OpKind::Logistic => zip3(da, g, y, |gi, yi| gi * yi * (1.0 - yi)),
                        OpKind::Exp => zip3(da, g, y, |gi, yi| gi * yi),
                        _ => zip3(da, g, y, |gi, yi| -gi * yi * yi),
                    }
                }
            }
            OpKind::Square | OpKind::Relu => {
                if want_a {
                    let da = slot(adj, ia, g.len());
                    let x = &na.data;
                    if matches!(kind, OpKind::Square) {
                        zip3(da, g, x, |gi, xi| 2.0 * gi * xi);
                    } else {
                        zip3(da, g, x, |gi, xi| if xi > 0.0 { gi } else { 0.0 });
                    }
                }
            }
            OpKind::Scale(s) => {
                if want_a {
                    axpy(slot(adj, ia, g.len()), *s, g);
                }
            }
            OpKind::Offset(_) => {
                if want_a {
                    axpy(slot(adj, ia, g.len()), 1.0, g);
                }
            }
            OpKind::Sum | OpKind::Mean => {
                if want_a {
                    let n = na.data.len();
                    let v = if matches!(kind, OpKind::Mean) { g[0] / n as f64 } else { g[0] };
                    for d in slot(adj, ia, n).iter_mut() {
                        *d += v;
                    }
                }
            }
            OpKind::Column(j) => {
                if want_a {
                    let cols = na.cols;
                    let da = slot(adj, ia, na.data.len());
                    for (r, gi) in g.iter().enumerate() {
                        da[r * cols + j] += gi;
                    }
                }
            }
            OpKind::Rows { start, .. } => {
                if want_a {
                    let cols = na.cols;
                    let da = slot(adj, ia, na.data.len());
                    axpy(&mut da[start * cols..start * cols + g.len()], 1.0, g);
                }
            }
            OpKind::DenseMap(m) => {
                if want_a {
                    let c = na.cols;
                    let da = slot(adj, ia, na.data.len());
                    gemm(m.cols(), m.rows(), c, 1.0, MatRef::new(m.data(), m.cols(), true), MatRef::new(g, c, false), 1.0, da);
                }
            }
            OpKind::SparseMap(s) => {
                if want_a {
                    let c = na.cols;
                    let da = slot(adj, ia, na.data.len());
                    for col in 0..c {
                        s.apply_transpose_strided(g, c, col, da, c, col);
                    }
                }
            }
        }
    }
}

fn slot(adj: &mut [Option<Vec<f64>>], id: usize, len: usize) -> &mut [f64] {
    adj[id].get_or_insert_with(|| vec![0.0; len])
}

fn axpy(dst: &mut [f64], s: f64, src: &[f64]) {
    for (d, v) in dst.iter_mut().zip(src) {
        *d += s * v;
    }
}

fn zip3(dst: &mut [f64], g: &[f64], x: &[f64], f: impl Fn(f64, f64) -> f64) {
    for ((d, &gi), &xi) in dst.iter_mut().zip(g).zip(x) {
        *d += f(gi, xi);
    }
}

/// Numerically stable logistic function.
#[inline]
pub fn logistic(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Gradients of one scalar with respect to each parameter leaf, in registration order.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientMap {
    grads: Vec<Vec<f64>>,
    shapes: Vec<(usize, usize)>,
}

impl GradientMap {
    pub fn len(&self) -> usize {
        self.grads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.grads.is_empty()
    }

    /// Gradient for the `index`-th registered parameter.
    pub fn get(&self, index: usize) -> &[f64] {
        &self.grads[index]
    }

    pub fn shape(&self, index: usize) -> (usize, usize) {
        self.shapes[index]
    }

    /// All gradients concatenated in registration order.
    pub fn flatten(&self) -> Vec<f64> {
        self.grads.iter().flat_map(|g| g.iter().copied()).collect()
    }
}
