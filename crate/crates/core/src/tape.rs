//! Reverse-mode differentiation over dense tensors.
//!
//! A [`Tape`] is rebuilt for every forward pass. Each operation appends one
//! node holding its value and how to route gradients back to its inputs.
//! Because an operation can only reference nodes that already exist, the node
//! list is topologically ordered and backward is a single reverse sweep.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{SparseMatrix, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReduceOp {
    Sum,
    Mean,
    Max,
}

/// Which dimension a reduction collapses. `Rows` collapses the row dimension
/// and yields a `1 x cols` tensor.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Axis {
    Rows,
    Cols,
    All,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

enum Op {
    Leaf,
    MatMul(Var, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    AddRow(Var, Var),
    SubRow(Var, Var),
    MulScalar(Var, Var),
    Powf(Var, f64),
    Reduce {
        input: Var,
        op: ReduceOp,
        axis: Axis,
        // flat input index selected for each output element (max only)
        argmax: Vec<usize>,
    },
    Spmm(Var, Arc<SparseMatrix>),
    SliceRows {
        input: Var,
        start: usize,
    },
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    Reshape(Var),
    Trace(Var),
    CrossEntropy {
        logits: Var,
        labels: Vec<usize>,
        probs: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Option<Tensor>>,
    fault: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    /// Corrupts the matmul backward rule. Exists only so gradient-check
    /// tooling can demonstrate that it catches a broken derivative.
    pub fn inject_matmul_fault(&mut self, enabled: bool) {
        self.fault = enabled;
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn rg(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Records a tensor that receives no gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    /// Records a tensor whose gradient is populated by [`Tape::backward`].
    pub fn param(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> (usize, usize) {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.rg(v)
    }

    /// Gradient of the last backward pass, if `v` was reached.
    pub fn grad(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(value, Op::Transpose(a), rg)
    }

    pub fn elementwise(&mut self, a: Var, b: Var, op: ElementwiseOp) -> Result<Var> {
        let (va, vb) = (self.value(a), self.value(b));
        let (value, node) = match op {
            ElementwiseOp::Add => (va.add(vb)?, Op::Add(a, b)),
            ElementwiseOp::Sub => (va.sub(vb)?, Op::Sub(a, b)),
            ElementwiseOp::Mul => (va.mul(vb)?, Op::Mul(a, b)),
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, node, rg))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseOp::Add)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseOp::Sub)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.elementwise(a, b, ElementwiseOp::Mul)
    }

    pub fn scale(&mut self, a: Var, s: f64) -> Var {
        let value = self.value(a).scale(s);
        let rg = self.rg(a);
        self.push(value, Op::Scale(a, s), rg)
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        let rg = self.rg(a);
        self.push(value, Op::Relu(a), rg)
    }

    fn check_row(&self, a: Var, row: Var, op: &'static str) -> Result<()> {
        let (sa, sr) = (self.shape(a), self.shape(row));
        if sr.0 != 1 || sr.1 != sa.1 {
            return Err(Error::Dimension {
                op,
                left: sa,
                right: sr,
            });
        }
        Ok(())
    }

    /// `a + 1·row`, broadcasting a `1 x n` row over every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row(a, row, "add_row")?;
        let r = self.value(row).data().to_vec();
        let mut value = self.value(a).clone();
        let cols = value.cols();
        for chunk in value.data_mut().chunks_mut(cols.max(1)) {
            for (v, b) in chunk.iter_mut().zip(&r) {
                *v += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(value, Op::AddRow(a, row), rg))
    }

    /// `a - 1·row`.
    pub fn sub_row(&mut self, a: Var, row: Var) -> Result<Var> {
        self.check_row(a, row, "sub_row")?;
        let r = self.value(row).data().to_vec();
        let mut value = self.value(a).clone();
        let cols = value.cols();
        for chunk in value.data_mut().chunks_mut(cols.max(1)) {
            for (v, b) in chunk.iter_mut().zip(&r) {
                *v -= b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        Ok(self.push(value, Op::SubRow(a, row), rg))
    }

    /// `a · s` for a `1 x 1` tensor `s`.
    pub fn mul_scalar(&mut self, a: Var, s: Var) -> Result<Var> {
        if self.shape(s) != (1, 1) {
            return Err(Error::Dimension {
                op: "mul_scalar",
                left: self.shape(a),
                right: self.shape(s),
            });
        }
        let value = self.value(a).scale(self.value(s).item());
        let rg = self.rg(a) || self.rg(s);
        Ok(self.push(value, Op::MulScalar(a, s), rg))
    }

    /// Elementwise power.
    pub fn powf(&mut self, a: Var, p: f64) -> Var {
        let value = self.value(a).map(|v| v.powf(p));
        let rg = self.rg(a);
        self.push(value, Op::Powf(a, p), rg)
    }

    pub fn reduce(&mut self, a: Var, op: ReduceOp, axis: Axis) -> Result<Var> {
        let x = self.value(a);
        if x.is_empty() {
            return Err(Error::EmptyInput("reduce"));
        }
        let (rows, cols) = x.shape();
        // groups of flat indices, one group per output element
        let groups: Vec<Vec<usize>> = match axis {
            Axis::Rows => (0..cols).map(|c| (0..rows).map(|r| r * cols + c).collect()).collect(),
            Axis::Cols => (0..rows).map(|r| (0..cols).map(|c| r * cols + c).collect()).collect(),
            Axis::All => vec![(0..rows * cols).collect()],
        };
        let (out_rows, out_cols) = match axis {
            Axis::Rows => (1, cols),
            Axis::Cols => (rows, 1),
            Axis::All => (1, 1),
        };
        let data = x.data();
        let mut argmax = Vec::new();
        let values: Vec<f64> = groups
            .iter()
            .map(|g| match op {
                ReduceOp::Sum => g.iter().map(|&i| data[i]).sum(),
                ReduceOp::Mean => g.iter().map(|&i| data[i]).sum::<f64>() / g.len() as f64,
                ReduceOp::Max => {
                    // strict comparison keeps the lowest index on ties
                    let mut best = g[0];
                    for &i in &g[1..] {
                        if data[i] > data[best] {
                            best = i;
                        }
                    }
                    argmax.push(best);
                    data[best]
                }
            })
            .collect();
        let value = Tensor::new(out_rows, out_cols, values)?;
        let rg = self.rg(a);
        Ok(self.push(
            value,
            Op::Reduce {
                input: a,
                op,
                axis,
                argmax,
            },
            rg,
        ))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.reduce(a, ReduceOp::Sum, Axis::All)
    }

    /// Sparse-dense product `m · a` with a constant sparse operator.
    pub fn spmm(&mut self, m: Arc<SparseMatrix>, a: Var) -> Result<Var> {
        let value = m.matmul_dense(self.value(a))?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Spmm(a, m), rg))
    }

    pub fn slice_rows(&mut self, a: Var, start: usize, end: usize) -> Result<Var> {
        let x = self.value(a);
        if start > end || end > x.rows() {
            return Err(Error::contract(format!(
                "row slice {start}..{end} out of range for {} rows",
                x.rows()
            )));
        }
        let value = x.slice_rows(start, end);
        let rg = self.rg(a);
        Ok(self.push(value, Op::SliceRows { input: a, start }, rg))
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_rows"));
        }
        let tensors: Vec<&Tensor> = parts.iter().map(|p| self.value(*p)).collect();
        let value = Tensor::vstack(&tensors)?;
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(value, Op::ConcatRows(parts.to_vec()), rg))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::EmptyInput("concat_cols"));
        }
        let rows = self.shape(parts[0]).0;
        let mut cols = 0;
        for p in parts {
            let s = self.shape(*p);
            if s.0 != rows {
                return Err(Error::Dimension {
                    op: "concat_cols",
                    left: (rows, cols),
                    right: s,
                });
            }
            cols += s.1;
        }
        let mut data = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for p in parts {
                data.extend_from_slice(self.value(*p).row(r));
            }
        }
        let value = Tensor::new(rows, cols, data)?;
        let rg = parts.iter().any(|p| self.rg(*p));
        Ok(self.push(value, Op::ConcatCols(parts.to_vec()), rg))
    }

    pub fn reshape(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let value = self.value(a).reshape(rows, cols)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    pub fn trace(&mut self, a: Var) -> Result<Var> {
        let x = self.value(a);
        if !x.is_square() {
            return Err(Error::Dimension {
                op: "trace",
                left: x.shape(),
                right: (x.cols(), x.rows()),
            });
        }
        let value = Tensor::scalar(x.trace());
        let rg = self.rg(a);
        Ok(self.push(value, Op::Trace(a), rg))
    }

    /// `(a + aᵀ) / 2`.
    pub fn symmetrize(&mut self, a: Var) -> Result<Var> {
        let t = self.transpose(a);
        let s = self.add(a, t)?;
        Ok(self.scale(s, 0.5))
    }

    /// Mean negative log-softmax of the true class over the rows of `logits`.
    pub fn cross_entropy(&mut self, logits: Var, labels: &[usize]) -> Result<Var> {
        let x = self.value(logits);
        let (b, c) = x.shape();
        if b != labels.len() {
            return Err(Error::Dimension {
                op: "cross_entropy",
                left: (b, c),
                right: (labels.len(), 1),
            });
        }
        if b == 0 {
            return Err(Error::EmptyInput("cross_entropy"));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= c) {
            return Err(Error::contract(format!("label {bad} out of range for {c} classes")));
        }
        let mut probs = Tensor::zeros(b, c);
        let mut loss = 0.0;
        for (r, &label) in labels.iter().enumerate() {
            let row = x.row(r);
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            loss += lse - row[label];
            for (j, v) in row.iter().enumerate() {
                probs.set(r, j, (v - lse).exp());
            }
        }
        let value = Tensor::scalar(loss / b as f64);
        let rg = self.rg(logits);
        Ok(self.push(
            value,
            Op::CrossEntropy {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            rg,
        ))
    }

    /// Populates gradients of every node reachable from the scalar `loss`.
    /// Gradients from earlier passes are discarded.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.shape(loss) != (1, 1) {
            return Err(Error::contract(format!(
                "backward needs a 1x1 loss, got {:?}",
                self.shape(loss)
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        if self.rg(loss) {
            grads[loss.0] = Some(Tensor::scalar(1.0));
        }
        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            self.propagate(i, &g, &mut grads);
            grads[i] = Some(g);
        }
        self.grads = grads;
        Ok(())
    }

    fn propagate(&self, i: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[i];
        let mut acc = |v: Var, t: Tensor| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            match &mut grads[v.0] {
                Some(existing) => existing.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        let val = |v: Var| &self.nodes[v.0].value;
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(*a) {
                    let mut ga = g.matmul(&val(*b).transpose()).expect("matmul grad shape");
                    if self.fault {
                        ga = ga.scale(0.5);
                    }
                    acc(*a, ga);
                }
                if self.rg(*b) {
                    acc(*b, val(*a).transpose().matmul(g).expect("matmul grad shape"));
                }
            }
            Op::Transpose(a) => acc(*a, g.transpose()),
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.scale(-1.0));
            }
            Op::Mul(a, b) => {
                if self.rg(*a) {
                    acc(*a, g.mul(val(*b)).expect("mul grad shape"));
                }
                if self.rg(*b) {
                    acc(*b, g.mul(val(*a)).expect("mul grad shape"));
                }
            }
            Op::Scale(a, s) => acc(*a, g.scale(*s)),
            Op::Relu(a) => {
                let x = val(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(gv, xv)| if *xv > 0.0 { *gv } else { 0.0 })
                    .collect();
                acc(*a, Tensor::new(g.rows(), g.cols(), data).expect("relu grad shape"));
            }
            Op::AddRow(a, row) | Op::SubRow(a, row) => {
                acc(*a, g.clone());
                if self.rg(*row) {
                    let mut colsum = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (c, v) in g.row(r).iter().enumerate() {
                            colsum.data_mut()[c] += v;
                        }
                    }
                    if matches!(node.op, Op::SubRow(..)) {
                        colsum = colsum.scale(-1.0);
                    }
                    acc(*row, colsum);
                }
            }
            Op::MulScalar(a, s) => {
                let sv = val(*s).item();
                if self.rg(*a) {
                    acc(*a, g.scale(sv));
                }
                if self.rg(*s) {
                    let dot: f64 = g.data().iter().zip(val(*a).data()).map(|(x, y)| x * y).sum();
                    acc(*s, Tensor::scalar(dot));
                }
            }
            Op::Powf(a, p) => {
                let x = val(*a);
                let data = g
                    .data()
                    .iter()
                    .zip(x.data())
                    .map(|(gv, xv)| gv * p * xv.powf(p - 1.0))
                    .collect();
                acc(*a, Tensor::new(g.rows(), g.cols(), data).expect("powf grad shape"));
            }
            Op::Reduce {
                input,
                op,
                axis,
                argmax,
            } => {
                let (rows, cols) = val(*input).shape();
                let mut ga = Tensor::zeros(rows, cols);
                match op {
                    ReduceOp::Max => {
                        for (k, &idx) in argmax.iter().enumerate() {
                            ga.data_mut()[idx] += g.data()[k];
                        }
                    }
                    ReduceOp::Sum | ReduceOp::Mean => {
                        let count = match axis {
                            Axis::Rows => rows,
                            Axis::Cols => cols,
                            Axis::All => rows * cols,
                        } as f64;
                        let scale = if *op == ReduceOp::Mean { 1.0 / count } else { 1.0 };
                        for r in 0..rows {
                            for c in 0..cols {
                                let gv = match axis {
                                    Axis::Rows => g.data()[c],
                                    Axis::Cols => g.data()[r],
                                    Axis::All => g.data()[0],
                                };
                                ga.set(r, c, gv * scale);
                            }
                        }
                    }
                }
                acc(*input, ga);
            }
            Op::Spmm(a, m) => acc(*a, m.transpose_matmul_dense(g)),
            Op::SliceRows { input, start } => {
                let (rows, cols) = val(*input).shape();
                let mut ga = Tensor::zeros(rows, cols);
                ga.data_mut()[start * cols..start * cols + g.len()].copy_from_slice(g.data());
                acc(*input, ga);
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for p in parts {
                    let r = val(*p).rows();
                    if self.rg(*p) {
                        acc(*p, g.slice_rows(offset, offset + r));
                    }
                    offset += r;
                }
            }
            Op::ConcatCols(parts) => {
                let mut offset = 0;
                for p in parts {
                    let (rows, cols) = val(*p).shape();
                    if self.rg(*p) {
                        let part = Tensor::from_fn(rows, cols, |r, c| g.get(r, offset + c));
                        acc(*p, part);
                    }
                    offset += cols;
                }
            }
            Op::Reshape(a) => {
                let (rows, cols) = val(*a).shape();
                acc(*a, g.reshape(rows, cols).expect("reshape grad shape"));
            }
            Op::Trace(a) => {
                let n = val(*a).rows();
                acc(*a, Tensor::identity(n).scale(g.item()));
            }
            Op::CrossEntropy {
                logits,
                labels,
                probs,
            } => {
                let b = labels.len() as f64;
                let mut ga = probs.clone();
                for (r, &l) in labels.iter().enumerate() {
                    let v = ga.get(r, l);
                    ga.set(r, l, v - 1.0);
                }
                acc(*logits, ga.scale(g.item() / b));
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn relu_sign_cases() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::row_vector(&[-1.0, 0.0, 2.0]));
        let y = t.relu(x);
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 2.0]);
    }

    #[test]
    fn add_zero_is_identity() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_rows(&[[1.5, -2.0], [0.25, 4.0]]));
        let z = t.constant(Tensor::zeros(2, 2));
        let y = t.add(x, z).unwrap();
        assert_eq!(t.value(y), t.value(x));
    }

    #[test]
    fn mean_over_rows() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::from_rows(&[[1.0, 3.0], [3.0, 5.0]]));
        let m = t.reduce(x, ReduceOp::Mean, Axis::Rows).unwrap();
        assert_eq!(t.value(m).data(), &[2.0, 4.0]);
    }

    #[test]
    fn sum_of_zeros() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(3, 2));
        let s = t.sum(x).unwrap();
        assert_eq!(t.value(s).item(), 0.0);
    }

    #[test]
    fn max_tie_routes_to_lowest_index() {
        let values = [1.0, 2.0, 2.0];
        // enumerate the tie rule independently: first index attaining the max
        let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let expected = values.iter().position(|v| *v == max).unwrap();
        let mut t = Tape::new();
        let x = t.param(Tensor::row_vector(&values));
        let m = t.reduce(x, ReduceOp::Max, Axis::All).unwrap();
        t.backward(m).unwrap();
        let g = t.grad(x).unwrap().data();
        assert_eq!(expected, 1);
        assert_eq!(g, &[0.0, 1.0, 0.0]);
    }

    #[test]
    fn reduce_empty_errors() {
        let mut t = Tape::new();
        let x = t.constant(Tensor::zeros(0, 3));
        assert!(matches!(t.sum(x), Err(Error::EmptyInput(_))));
    }

    #[test]
    fn grad_of_sum_is_ones() {
        let mut t = Tape::new();
        let x = t.param(Tensor::from_rows(&[[1.0, 2.0], [3.0, 4.0]]));
        let s = t.sum(x).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), &Tensor::filled(2, 2, 1.0));
    }

    #[test]
    fn grad_of_square_is_twice_input() {
        let xv = Tensor::from_rows(&[[1.0, -2.0], [0.5, 3.0]]);
        let mut t = Tape::new();
        let x = t.param(xv.clone());
        let sq = t.mul(x, x).unwrap();
        let s = t.sum(sq).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap(), &xv.scale(2.0));
    }

    #[test]
    fn gradients_accumulate_over_reuse() {
        let mut t = Tape::new();
        let x = t.param(Tensor::scalar(0.7));
        let y = t.add(x, x).unwrap();
        t.backward(y).unwrap();
        assert_eq!(t.grad(x).unwrap().item(), 2.0);
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let mut t = Tape::new();
        let x = t.param(Tensor::zeros(2, 2));
        assert!(matches!(t.backward(x), Err(Error::Contract(_))));
    }

    #[test]
    fn constants_receive_no_gradient() {
        let mut t = Tape::new();
        let a = t.constant(Tensor::from_rows(&[[1.0, 2.0]]));
        let b = t.param(Tensor::from_rows(&[[3.0], [4.0]]));
        let y = t.matmul(a, b).unwrap();
        t.backward(y).unwrap();
        assert!(t.grad(a).is_none());
        assert_eq!(t.grad(b).unwrap().data(), &[1.0, 2.0]);
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let mut t = Tape::new();
        let l = t.constant(Tensor::from_rows(&[[0.3, 0.3], [-1.0, -1.0]]));
        let loss = t.cross_entropy(l, &[0, 1]).unwrap();
        assert!((t.value(loss).item() - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn confident_correct_logit_gives_zero_loss() {
        let mut t = Tape::new();
        let l = t.constant(Tensor::from_rows(&[[1000.0, 0.0, -5.0]]));
        let loss = t.cross_entropy(l, &[0]).unwrap();
        assert!(t.value(loss).item().abs() < 1e-12);
    }

    #[test]
    fn cross_entropy_label_out_of_range() {
        let mut t = Tape::new();
        let l = t.constant(Tensor::zeros(1, 2));
        assert!(matches!(t.cross_entropy(l, &[2]), Err(Error::Contract(_))));
    }
}
