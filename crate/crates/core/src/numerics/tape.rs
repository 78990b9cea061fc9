//! Reverse-mode automatic differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as a node holding its forward value.
//! Nodes are appended in evaluation order, so the node vector is already a
//! topological order and [`Tape::backward`] simply walks it in reverse.
//!
//! Leaves come in two flavours: parameters ([`Tape::param`]) accumulate
//! gradients, constants ([`Tape::constant`]) do not. Sparse operands are
//! always constants; they enter through [`Tape::spmm`].
//!
//! ```
//! use midelight::numerics::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let w = tape.param(Matrix::from_rows(&[vec![1.0, 2.0], vec![3.0, 4.0]]).unwrap());
//! let x = tape.constant(Matrix::from_rows(&[vec![1.0], vec![1.0]]).unwrap());
//! let y = tape.matmul(w, x).unwrap();
//! let loss = tape.sum(y);
//! tape.backward(loss).unwrap();
//! assert_eq!(tape.grad(w).unwrap().as_slice(), &[1.0, 1.0, 1.0, 1.0]);
//! ```

use std::sync::Arc;

use super::matrix::{dot, Matrix};
use super::sparse::CsrMatrix;
use crate::error::{Error, Result};

/// Rows whose L2 norm falls below this pass through row normalization as zeros.
pub const NORM_EPSILON: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A constant sparse operand together with its transpose, which the adjoint
/// of `S · X` needs.
#[derive(Debug)]
pub struct SparseOperand {
    pub matrix: CsrMatrix,
    pub transpose: CsrMatrix,
}

impl SparseOperand {
    pub fn new(matrix: CsrMatrix) -> Arc<Self> {
        let transpose = matrix.transpose();
        Arc::new(Self { matrix, transpose })
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    /// `a · bᵀ`, the pairwise dot-product matrix.
    Similarity(Var, Var),
    SpMM(Arc<SparseOperand>, Var),
    Add(Var, Var),
    /// Adds a `1 x n` row to every row.
    AddRow(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    Relu(Var),
    Exp(Var),
    /// `ln(max(x, floor))`
    Log(Var, f64),
    RowL2Normalize(Var),
    RowSoftmax(Var),
    /// Row-wise log-softmax restricted to the entries where the mask is set;
    /// masked-out entries output 0.
    MaskedLogSoftmax(Var, Arc<Vec<bool>>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Arc<Vec<usize>>),
    GatherCols(Var, Arc<Vec<usize>>),
    Sum(Var),
    /// `Σ w_ij x_ij` against a constant weight matrix.
    WeightedSum(Var, Arc<Matrix>),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
    requires_grad: bool,
    is_param: bool,
    grad: Option<Matrix>,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    /// Accumulated gradient of a parameter leaf, if `backward` reached it.
    pub fn grad(&self, v: Var) -> Option<&Matrix> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    pub fn param(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, true)
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push_leaf(value, false)
    }

    fn push_leaf(&mut self, value: Matrix, is_param: bool) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            requires_grad: is_param,
            is_param,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn push(&mut self, value: Matrix, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
            is_param: false,
            grad: None,
        });
        Var(self.nodes.len() - 1)
    }

    fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b), &[a, b]))
    }

    pub fn similarity(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul_nt(self.value(b))?;
        Ok(self.push(value, Op::Similarity(a, b), &[a, b]))
    }

    pub fn spmm(&mut self, s: Arc<SparseOperand>, x: Var) -> Result<Var> {
        let value = s.matrix.matmul_dense(self.value(x))?;
        Ok(self.push(value, Op::SpMM(s, x), &[x]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Shape(format!(
                "add: {:?} with {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let mut value = self.value(a).clone();
        value.add_assign(self.value(b));
        Ok(self.push(value, Op::Add(a, b), &[a, b]))
    }

    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        let (r, c) = self.shape(row);
        if r != 1 || c != self.shape(a).1 {
            return Err(Error::Shape(format!(
                "add_row: {:?} with {:?}",
                self.shape(a),
                (r, c)
            )));
        }
        let mut value = self.value(a).clone();
        let bias = self.value(row).row(0).to_vec();
        for i in 0..value.rows() {
            for (x, b) in value.row_mut(i).iter_mut().zip(&bias) {
                *x += b;
            }
        }
        Ok(self.push(value, Op::AddRow(a, row), &[a, row]))
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x * s);
        self.push(value, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).map(|x| x + s);
        self.push(value, Op::AddScalar(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|x| x.max(0.0));
        self.push(value, Op::Relu(a), &[a])
    }

    pub fn exp(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::exp);
        self.push(value, Op::Exp(a), &[a])
    }

    /// Natural log with inputs clamped from below at `floor`.
    pub fn log(&mut self, a: Var, floor: f64) -> Var {
        let value = self.value(a).map(|x| x.max(floor).ln());
        self.push(value, Op::Log(a, floor), &[a])
    }

    pub fn row_l2_normalize(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            let row = value.row_mut(i);
            let norm = dot(row, row).sqrt();
            if norm < NORM_EPSILON {
                row.fill(0.0);
            } else {
                row.iter_mut().for_each(|x| *x /= norm);
            }
        }
        self.push(value, Op::RowL2Normalize(a), &[a])
    }

    pub fn row_softmax(&mut self, a: Var) -> Var {
        let mut value = self.value(a).clone();
        for i in 0..value.rows() {
            softmax_in_place(value.row_mut(i));
        }
        self.push(value, Op::RowSoftmax(a), &[a])
    }

    /// Log-softmax of each row over the entries where `mask` (row-major,
    /// same shape) is `true`. Rows with no active entry produce zeros.
    pub fn masked_log_softmax(&mut self, a: Var, mask: Arc<Vec<bool>>) -> Result<Var> {
        let (r, c) = self.shape(a);
        if mask.len() != r * c {
            return Err(Error::Shape(format!(
                "mask of {} entries for a {r}x{c} input",
                mask.len()
            )));
        }
        let mut value = Matrix::zeros(r, c);
        for i in 0..r {
            let x = self.value(a).row(i);
            let m = &mask[i * c..(i + 1) * c];
            if let Some(lse) = masked_logsumexp(x, m) {
                for (j, o) in value.row_mut(i).iter_mut().enumerate() {
                    if m[j] {
                        *o = x[j] - lse;
                    }
                }
            }
        }
        Ok(self.push(value, Op::MaskedLogSoftmax(a, mask), &[a]))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        let rows = parts
            .first()
            .map(|&p| self.shape(p).0)
            .ok_or_else(|| Error::Shape("concat of zero blocks".into()))?;
        if parts.iter().any(|&p| self.shape(p).0 != rows) {
            return Err(Error::Shape("concat blocks differ in row count".into()));
        }
        let cols: usize = parts.iter().map(|&p| self.shape(p).1).sum();
        let mut value = Matrix::zeros(rows, cols);
        for i in 0..rows {
            let mut offset = 0;
            for &p in parts {
                let src = self.value(p).row(i);
                value.row_mut(i)[offset..offset + src.len()].copy_from_slice(src);
                offset += src.len();
            }
        }
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), parts))
    }

    pub fn gather_rows(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let rows = self.shape(a).0;
        if let Some(&bad) = idx.iter().find(|&&i| i >= rows) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: rows,
            });
        }
        let value = self.value(a).gather_rows(&idx);
        Ok(self.push(value, Op::GatherRows(a, idx), &[a]))
    }

    pub fn gather_cols(&mut self, a: Var, idx: Arc<Vec<usize>>) -> Result<Var> {
        let (rows, cols) = self.shape(a);
        if let Some(&bad) = idx.iter().find(|&&j| j >= cols) {
            return Err(Error::IndexOutOfRange {
                index: bad,
                size: cols,
            });
        }
        let src = self.value(a);
        let value = Matrix::from_fn(rows, idx.len(), |i, j| src.get(i, idx[j]));
        Ok(self.push(value, Op::GatherCols(a, idx), &[a]))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a), &[a])
    }

    pub fn weighted_sum(&mut self, a: Var, weights: Arc<Matrix>) -> Result<Var> {
        if weights.shape() != self.shape(a) {
            return Err(Error::Shape(format!(
                "weighted_sum: weights {:?} for input {:?}",
                weights.shape(),
                self.shape(a)
            )));
        }
        let s = dot(self.value(a).as_slice(), weights.as_slice());
        Ok(self.push(Matrix::scalar(s), Op::WeightedSum(a, weights), &[a]))
    }

    /// Smallest |pre-activation| over every ReLU input on the tape, used to
    /// keep finite-difference probes away from kinks.
    pub fn min_relu_margin(&self) -> f64 {
        self.nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Relu(a) => Some(self.value(a)),
                _ => None,
            })
            .flat_map(|m| m.as_slice().iter().map(|v| v.abs()))
            .fold(f64::INFINITY, f64::min)
    }

    /// Propagates d(loss)/d(node) back to every parameter leaf, adding into
    /// any gradient already stored there.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::Shape(format!(
                "backward needs a scalar root, got {:?}",
                self.shape(loss)
            )));
        }
        let mut adj: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adj[loss.0] = Some(Matrix::scalar(1.0));
        for id in (0..=loss.0).rev() {
            let Some(g) = adj[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            if self.nodes[id].is_param {
                match &mut self.nodes[id].grad {
                    Some(acc) => acc.add_assign(&g),
                    slot @ None => *slot = Some(g),
                }
                continue;
            }
            let op = self.nodes[id].op.clone();
            for (input, contribution) in self.adjoint(id, &op, &g)? {
                if !self.nodes[input.0].requires_grad {
                    continue;
                }
                match &mut adj[input.0] {
                    Some(acc) => acc.add_assign(&contribution),
                    slot @ None => *slot = Some(contribution),
                }
            }
        }
        Ok(())
    }

    fn needs(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn adjoint(&self, id: usize, op: &Op, g: &Matrix) -> Result<Vec<(Var, Matrix)>> {
        let out = &self.nodes[id].value;
        let mut res = Vec::with_capacity(2);
        match op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.needs(*a) {
                    res.push((*a, g.matmul_nt(self.value(*b))?));
                }
                if self.needs(*b) {
                    res.push((*b, self.value(*a).matmul_tn(g)?));
                }
            }
            Op::Similarity(a, b) => {
                if self.needs(*a) {
                    res.push((*a, g.matmul(self.value(*b))?));
                }
                if self.needs(*b) {
                    res.push((*b, g.matmul_tn(self.value(*a))?));
                }
            }
            Op::SpMM(s, x) => res.push((*x, s.transpose.matmul_dense(g)?)),
            Op::Add(a, b) => {
                res.push((*a, g.clone()));
                res.push((*b, g.clone()));
            }
            Op::AddRow(a, row) => {
                res.push((*a, g.clone()));
                if self.needs(*row) {
                    let mut col_sums = Matrix::zeros(1, g.cols());
                    for i in 0..g.rows() {
                        for (s, v) in col_sums.row_mut(0).iter_mut().zip(g.row(i)) {
                            *s += v;
                        }
                    }
                    res.push((*row, col_sums));
                }
            }
            Op::Scale(a, s) => res.push((*a, g.map(|v| v * s))),
            Op::AddScalar(a) => res.push((*a, g.clone())),
            Op::Relu(a) => {
                let x = self.value(*a);
                let mut d = g.clone();
                for (dv, &xv) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    if xv <= 0.0 {
                        *dv = 0.0;
                    }
                }
                res.push((*a, d));
            }
            Op::Exp(a) => {
                let mut d = g.clone();
                for (dv, &y) in d.as_mut_slice().iter_mut().zip(out.as_slice()) {
                    *dv *= y;
                }
                res.push((*a, d));
            }
            Op::Log(a, floor) => {
                let x = self.value(*a);
                let mut d = g.clone();
                for (dv, &xv) in d.as_mut_slice().iter_mut().zip(x.as_slice()) {
                    *dv = if xv > *floor { *dv / xv } else { 0.0 };
                }
                res.push((*a, d));
            }
            Op::RowL2Normalize(a) => {
                let x = self.value(*a);
                let mut d = Matrix::zeros(g.rows(), g.cols());
                for i in 0..g.rows() {
                    let xr = x.row(i);
                    let norm = dot(xr, xr).sqrt();
                    if norm < NORM_EPSILON {
                        continue;
                    }
                    let y = out.row(i);
                    let gr = g.row(i);
                    let proj = dot(y, gr);
                    for ((dv, &gv), &yv) in d.row_mut(i).iter_mut().zip(gr).zip(y) {
                        *dv = (gv - yv * proj) / norm;
                    }
                }
                res.push((*a, d));
            }
            Op::RowSoftmax(a) => {
                let mut d = Matrix::zeros(g.rows(), g.cols());
                for i in 0..g.rows() {
                    let s = out.row(i);
                    let gr = g.row(i);
                    let inner = dot(s, gr);
                    for ((dv, &gv), &sv) in d.row_mut(i).iter_mut().zip(gr).zip(s) {
                        *dv = sv * (gv - inner);
                    }
                }
                res.push((*a, d));
            }
            Op::MaskedLogSoftmax(a, mask) => {
                let c = g.cols();
                let mut d = Matrix::zeros(g.rows(), c);
                for i in 0..g.rows() {
                    let m = &mask[i * c..(i + 1) * c];
                    let y = out.row(i);
                    let gr = g.row(i);
                    let total: f64 = gr.iter().zip(m).filter(|(_, &on)| on).map(|(v, _)| v).sum();
                    for j in 0..c {
                        if m[j] {
                            d.set(i, j, gr[j] - y[j].exp() * total);
                        }
                    }
                }
                res.push((*a, d));
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let w = self.shape(p).1;
                    if self.needs(p) {
                        let block = Matrix::from_fn(g.rows(), w, |i, j| g.get(i, offset + j));
                        res.push((p, block));
                    }
                    offset += w;
                }
            }
            Op::GatherRows(a, idx) => {
                let (r, c) = self.shape(*a);
                let mut d = Matrix::zeros(r, c);
                for (k, &i) in idx.iter().enumerate() {
                    for (dv, gv) in d.row_mut(i).iter_mut().zip(g.row(k)) {
                        *dv += gv;
                    }
                }
                res.push((*a, d));
            }
            Op::GatherCols(a, idx) => {
                let (r, c) = self.shape(*a);
                let mut d = Matrix::zeros(r, c);
                for i in 0..r {
                    for (k, &j) in idx.iter().enumerate() {
                        let v = d.get(i, j) + g.get(i, k);
                        d.set(i, j, v);
                    }
                }
                res.push((*a, d));
            }
            Op::Sum(a) => {
                let (r, c) = self.shape(*a);
                res.push((*a, Matrix::filled(r, c, g.as_slice()[0])));
            }
            Op::WeightedSum(a, w) => {
                let s = g.as_slice()[0];
                res.push((*a, w.map(|v| v * s)));
            }
        }
        Ok(res)
    }
}

/// Max-subtracted softmax of one row.
pub fn softmax_in_place(row: &mut [f64]) {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return;
    }
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

fn masked_logsumexp(x: &[f64], mask: &[bool]) -> Option<f64> {
    let max = x
        .iter()
        .zip(mask)
        .filter(|(_, &on)| on)
        .map(|(&v, _)| v)
        .fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return None;
    }
    let total: f64 = x
        .iter()
        .zip(mask)
        .filter(|(_, &on)| on)
        .map(|(&v, _)| (v - max).exp())
        .sum();
    Some(max + total.ln())
}
