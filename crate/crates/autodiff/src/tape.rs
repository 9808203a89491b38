//! Dynamic tape for reverse-mode differentiation.
//!
//! Every op appends a node holding its forward value and the handles of its
//! inputs. Nodes are therefore stored in topological order and the backward
//! pass is a single reverse sweep that visits each node once.

use std::cell::{Ref, RefCell};

use crate::array::Array;
use crate::error::{AutodiffError, Result};
use crate::params::{ParamId, ParameterStore};

pub const DEFAULT_LEAKY_SLOPE: f64 = 0.01;

const GELU_COEFF: f64 = 0.044_715;
// sqrt(2 / pi)
const SQRT_2_OVER_PI: f64 = 0.797_884_560_802_865_4;

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolKind {
    Sum,
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param(ParamId),
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Affine(Var, f64),
    ConcatCols(Vec<Var>),
    ConcatRows(Vec<Var>),
    SliceCols(Var, usize),
    SliceRows(Var, usize),
    GatherRows(Var, Vec<usize>),
    Pool {
        input: Var,
        kind: PoolKind,
        lengths: Vec<usize>,
        argmax: Vec<usize>,
    },
    Sigmoid(Var),
    Tanh(Var),
    LeakyRelu(Var, f64),
    Gelu(Var),
    Log(Var),
    LogSigmoid(Var),
    Square(Var),
    SoftmaxRows(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
}

#[derive(Debug)]
struct Node {
    value: Array,
    op: Op,
}

#[derive(Debug, Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Per-node gradients produced by [`Tape::gradients`].
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Array>>,
}

impl Gradients {
    pub fn get(&self, v: Var) -> Option<&Array> {
        self.grads.get(v.0).and_then(|g| g.as_ref())
    }
}

fn mismatch(op: &'static str, a: &Array, b: &Array) -> AutodiffError {
    AutodiffError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
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

pub fn gelu(x: f64) -> f64 {
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x)).tanh())
}

fn gelu_derivative(x: f64) -> f64 {
    let t = (SQRT_2_OVER_PI * (x + GELU_COEFF * x * x * x)).tanh();
    0.5 * (1.0 + t) + 0.5 * x * (1.0 - t * t) * SQRT_2_OVER_PI * (1.0 + 3.0 * GELU_COEFF * x * x)
}

pub fn leaky_relu(x: f64, slope: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        slope * x
    }
}

fn log_sigmoid(x: f64) -> f64 {
    x.min(0.0) - (-x.abs()).exp().ln_1p()
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.borrow().is_empty()
    }

    fn push(&self, value: Array, op: Op) -> Var {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node { value, op });
        Var(nodes.len() - 1)
    }

    fn val(&self, v: Var) -> Ref<'_, Array> {
        Ref::map(self.nodes.borrow(), |n| &n[v.0].value)
    }

    pub fn value(&self, v: Var) -> Array {
        self.val(v).clone()
    }

    pub fn shape(&self, v: Var) -> Vec<usize> {
        self.val(v).shape().to_vec()
    }

    /// The single entry of a scalar node.
    pub fn scalar(&self, v: Var) -> f64 {
        self.val(v).data()[0]
    }

    /// A constant: receives no gradient contribution outside the tape.
    pub fn constant(&self, value: Array) -> Var {
        self.push(value, Op::Leaf)
    }

    /// Binds a parameter's current value; gradients flow back to the store.
    pub fn param(&self, store: &ParameterStore, id: ParamId) -> Var {
        self.push(store.value(id).clone(), Op::Param(id))
    }

    pub fn matmul(&self, a: Var, b: Var) -> Result<Var> {
        let out = {
            let (x, y) = (self.val(a), self.val(b));
            if x.cols() != y.rows() {
                return Err(mismatch("matmul", &x, &y));
            }
            x.matmul(&y)
        };
        Ok(self.push(out, Op::MatMul(a, b)))
    }

    fn same_shape(&self, op: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64) -> Result<Array> {
        let (x, y) = (self.val(a), self.val(b));
        if x.shape() != y.shape() {
            return Err(mismatch(op, &x, &y));
        }
        Ok(x.zip_map(&y, f))
    }

    pub fn add(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.same_shape("add", a, b, |x, y| x + y)?;
        Ok(self.push(out, Op::Add(a, b)))
    }

    pub fn sub(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.same_shape("sub", a, b, |x, y| x - y)?;
        Ok(self.push(out, Op::Sub(a, b)))
    }

    pub fn mul(&self, a: Var, b: Var) -> Result<Var> {
        let out = self.same_shape("mul", a, b, |x, y| x * y)?;
        Ok(self.push(out, Op::Mul(a, b)))
    }

    /// `a [m,n] + row [1,n]` broadcast over rows.
    pub fn add_row(&self, a: Var, row: Var) -> Result<Var> {
        let out = {
            let (x, r) = (self.val(a), self.val(row));
            if r.rows() != 1 || r.cols() != x.cols() {
                return Err(mismatch("add_row", &x, &r));
            }
            let n = x.cols();
            let mut out = x.clone();
            for chunk in out.data_mut().chunks_mut(n) {
                for (o, b) in chunk.iter_mut().zip(r.data()) {
                    *o += b;
                }
            }
            out
        };
        Ok(self.push(out, Op::AddRow(a, row)))
    }

    /// `a [m,n] ⊙ col [m,1]` broadcast over columns.
    pub fn mul_col(&self, a: Var, col: Var) -> Result<Var> {
        let out = {
            let (x, c) = (self.val(a), self.val(col));
            if c.cols() != 1 || c.rows() != x.rows() {
                return Err(mismatch("mul_col", &x, &c));
            }
            let n = x.cols();
            let mut out = x.clone();
            for (chunk, s) in out.data_mut().chunks_mut(n).zip(c.data()) {
                chunk.iter_mut().for_each(|o| *o *= s);
            }
            out
        };
        Ok(self.push(out, Op::MulCol(a, col)))
    }

    /// `scale * a + shift`.
    pub fn affine(&self, a: Var, scale: f64, shift: f64) -> Var {
        let out = self.val(a).map(|x| scale * x + shift);
        self.push(out, Op::Affine(a, scale))
    }

    pub fn scale(&self, a: Var, factor: f64) -> Var {
        self.affine(a, factor, 0.0)
    }

    pub fn concat_cols(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(AutodiffError::EmptyAxis { op: "concat_cols" });
        }
        let out = {
            let vals: Vec<_> = parts.iter().map(|&p| self.val(p)).collect();
            let rows = vals[0].rows();
            for v in &vals[1..] {
                if v.rows() != rows {
                    return Err(mismatch("concat_cols", &vals[0], v));
                }
            }
            let total: usize = vals.iter().map(|v| v.cols()).sum();
            let mut data = Vec::with_capacity(rows * total);
            for r in 0..rows {
                for v in &vals {
                    data.extend_from_slice(v.row_slice(r));
                }
            }
            Array::matrix(rows, total, data)?
        };
        Ok(self.push(out, Op::ConcatCols(parts.to_vec())))
    }

    pub fn concat_rows(&self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(AutodiffError::EmptyAxis { op: "concat_rows" });
        }
        let out = {
            let vals: Vec<_> = parts.iter().map(|&p| self.val(p)).collect();
            let cols = vals[0].cols();
            for v in &vals[1..] {
                if v.cols() != cols {
                    return Err(mismatch("concat_rows", &vals[0], v));
                }
            }
            let rows: usize = vals.iter().map(|v| v.rows()).sum();
            let mut data = Vec::with_capacity(rows * cols);
            for v in &vals {
                data.extend_from_slice(v.data());
            }
            Array::matrix(rows, cols, data)?
        };
        Ok(self.push(out, Op::ConcatRows(parts.to_vec())))
    }

    pub fn slice_cols(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        let out = {
            let x = self.val(a);
            if len == 0 || start + len > x.cols() {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "slice_cols",
                    index: start + len,
                    extent: x.cols(),
                });
            }
            let mut data = Vec::with_capacity(x.rows() * len);
            for r in 0..x.rows() {
                data.extend_from_slice(&x.row_slice(r)[start..start + len]);
            }
            Array::matrix(x.rows(), len, data)?
        };
        Ok(self.push(out, Op::SliceCols(a, start)))
    }

    pub fn slice_rows(&self, a: Var, start: usize, len: usize) -> Result<Var> {
        let out = {
            let x = self.val(a);
            if len == 0 || start + len > x.rows() {
                return Err(AutodiffError::IndexOutOfRange {
                    op: "slice_rows",
                    index: start + len,
                    extent: x.rows(),
                });
            }
            let c = x.cols();
            Array::matrix(len, c, x.data()[start * c..(start + len) * c].to_vec())?
        };
        Ok(self.push(out, Op::SliceRows(a, start)))
    }

    /// Row `i` of the output is row `indices[i]` of `a`.
    pub fn gather_rows(&self, a: Var, indices: &[usize]) -> Result<Var> {
        if indices.is_empty() {
            return Err(AutodiffError::EmptyAxis { op: "gather_rows" });
        }
        let out = {
            let x = self.val(a);
            let mut data = Vec::with_capacity(indices.len() * x.cols());
            for &i in indices {
                if i >= x.rows() {
                    return Err(AutodiffError::IndexOutOfRange {
                        op: "gather_rows",
                        index: i,
                        extent: x.rows(),
                    });
                }
                data.extend_from_slice(x.row_slice(i));
            }
            Array::matrix(indices.len(), x.cols(), data)?
        };
        Ok(self.push(out, Op::GatherRows(a, indices.to_vec())))
    }

    /// Pools consecutive row segments of `a`; `lengths` must sum to the row
    /// count. Output row `s` pools segment `s`.
    pub fn segment_pool(&self, a: Var, kind: PoolKind, lengths: &[usize]) -> Result<Var> {
        if lengths.is_empty() || lengths.contains(&0) {
            return Err(AutodiffError::EmptyAxis { op: "pool" });
        }
        let (out, argmax) = {
            let x = self.val(a);
            let total: usize = lengths.iter().sum();
            if total != x.rows() {
                return Err(AutodiffError::ShapeMismatch {
                    op: "pool",
                    left: x.shape().to_vec(),
                    right: vec![total],
                });
            }
            let n = x.cols();
            let mut data = vec![0.0; lengths.len() * n];
            let mut argmax = Vec::new();
            let mut start = 0;
            for (s, &len) in lengths.iter().enumerate() {
                let o = &mut data[s * n..(s + 1) * n];
                match kind {
                    PoolKind::Sum | PoolKind::Mean => {
                        for r in start..start + len {
                            for (acc, v) in o.iter_mut().zip(x.row_slice(r)) {
                                *acc += v;
                            }
                        }
                        if kind == PoolKind::Mean {
                            o.iter_mut().for_each(|v| *v /= len as f64);
                        }
                    }
                    PoolKind::Max => {
                        for c in 0..n {
                            let mut best = start;
                            for r in start + 1..start + len {
                                if x.get(r, c) > x.get(best, c) {
                                    best = r;
                                }
                            }
                            o[c] = x.get(best, c);
                            argmax.push(best);
                        }
                    }
                }
                start += len;
            }
            (Array::matrix(lengths.len(), n, data)?, argmax)
        };
        Ok(self.push(
            out,
            Op::Pool {
                input: a,
                kind,
                lengths: lengths.to_vec(),
                argmax,
            },
        ))
    }

    pub fn sum_pool(&self, a: Var) -> Result<Var> {
        let rows = self.val(a).rows();
        self.segment_pool(a, PoolKind::Sum, &[rows])
    }

    pub fn mean_pool(&self, a: Var) -> Result<Var> {
        let rows = self.val(a).rows();
        self.segment_pool(a, PoolKind::Mean, &[rows])
    }

    pub fn max_pool(&self, a: Var) -> Result<Var> {
        let rows = self.val(a).rows();
        self.segment_pool(a, PoolKind::Max, &[rows])
    }

    pub fn sigmoid(&self, a: Var) -> Var {
        let out = self.val(a).map(sigmoid);
        self.push(out, Op::Sigmoid(a))
    }

    pub fn tanh(&self, a: Var) -> Var {
        let out = self.val(a).map(f64::tanh);
        self.push(out, Op::Tanh(a))
    }

    pub fn leaky_relu(&self, a: Var, slope: f64) -> Var {
        let out = self.val(a).map(|x| leaky_relu(x, slope));
        self.push(out, Op::LeakyRelu(a, slope))
    }

    /// Tanh approximation of GeLU.
    pub fn gelu(&self, a: Var) -> Var {
        let out = self.val(a).map(gelu);
        self.push(out, Op::Gelu(a))
    }

    pub fn log(&self, a: Var) -> Result<Var> {
        let out = {
            let x = self.val(a);
            if let Some(&bad) = x.data().iter().find(|&&v| v <= 0.0 || !v.is_finite()) {
                return Err(AutodiffError::Domain { op: "log", value: bad });
            }
            x.map(f64::ln)
        };
        Ok(self.push(out, Op::Log(a)))
    }

    /// Numerically stable `ln σ(a)`.
    pub fn log_sigmoid(&self, a: Var) -> Var {
        let out = self.val(a).map(log_sigmoid);
        self.push(out, Op::LogSigmoid(a))
    }

    pub fn square(&self, a: Var) -> Var {
        let out = self.val(a).map(|x| x * x);
        self.push(out, Op::Square(a))
    }

    /// Softmax along each row.
    pub fn softmax(&self, a: Var) -> Result<Var> {
        let out = {
            let x = self.val(a);
            let n = x.cols();
            if n == 0 {
                return Err(AutodiffError::EmptyAxis { op: "softmax" });
            }
            let mut out = x.clone();
            for row in out.data_mut().chunks_mut(n) {
                let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
                let mut z = 0.0;
                for v in row.iter_mut() {
                    *v = (*v - max).exp();
                    z += *v;
                }
                row.iter_mut().for_each(|v| *v /= z);
            }
            out
        };
        Ok(self.push(out, Op::SoftmaxRows(a)))
    }

    /// Sum of all entries as a `[1,1]` scalar.
    pub fn sum(&self, a: Var) -> Var {
        let out = Array::scalar(self.val(a).sum());
        self.push(out, Op::Sum(a))
    }

    pub fn mean(&self, a: Var) -> Var {
        let out = {
            let x = self.val(a);
            Array::scalar(x.sum() / x.len() as f64)
        };
        self.push(out, Op::Mean(a))
    }

    /// Per-row sum, `[m,n] -> [m,1]`.
    pub fn row_sum(&self, a: Var) -> Var {
        let out = {
            let x = self.val(a);
            let data = (0..x.rows()).map(|r| x.row_slice(r).iter().sum()).collect();
            Array::matrix(x.rows(), 1, data).expect("positive rows")
        };
        self.push(out, Op::RowSum(a))
    }

    /// Reverse sweep from a scalar `loss`.
    pub fn gradients(&self, loss: Var) -> Result<Gradients> {
        let nodes = self.nodes.borrow();
        if !nodes[loss.0].value.is_scalar() {
            return Err(AutodiffError::NotScalar(nodes[loss.0].value.shape().to_vec()));
        }
        let mut grads: Vec<Option<Array>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Array::scalar(1.0));

        for i in (0..=loss.0).rev() {
            let Some(g) = grads[i].take() else { continue };
            let node = &nodes[i];
            propagate(&nodes, node, &g, &mut grads);
            grads[i] = Some(g);
        }
        Ok(Gradients { grads })
    }

    /// Writes `∂loss/∂p` into the store for every parameter; parameters that
    /// do not appear on the tape end up with a zero gradient.
    pub fn backward(&self, loss: Var, store: &mut ParameterStore) -> Result<()> {
        let grads = self.gradients(loss)?;
        store.zero_grads();
        let nodes = self.nodes.borrow();
        for (i, node) in nodes.iter().enumerate() {
            if let (Op::Param(id), Some(g)) = (&node.op, &grads.grads[i]) {
                store.accumulate_grad(*id, g);
            }
        }
        Ok(())
    }
}

fn accumulate(grads: &mut [Option<Array>], v: Var, contribution: Array) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&contribution),
        slot @ None => *slot = Some(contribution),
    }
}

fn propagate(nodes: &[Node], node: &Node, g: &Array, grads: &mut [Option<Array>]) {
    let value = |v: Var| &nodes[v.0].value;
    match &node.op {
        Op::Leaf | Op::Param(_) => {}
        Op::MatMul(a, b) => {
            accumulate(grads, *a, g.matmul_transpose_rhs(value(*b)));
            accumulate(grads, *b, value(*a).transpose_lhs_matmul(g));
        }
        Op::Add(a, b) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.clone());
        }
        Op::Sub(a, b) => {
            accumulate(grads, *a, g.clone());
            accumulate(grads, *b, g.map(|x| -x));
        }
        Op::Mul(a, b) => {
            accumulate(grads, *a, g.zip_map(value(*b), |g, y| g * y));
            accumulate(grads, *b, g.zip_map(value(*a), |g, x| g * x));
        }
        Op::AddRow(a, row) => {
            accumulate(grads, *a, g.clone());
            let n = g.cols();
            let mut rg = vec![0.0; n];
            for chunk in g.data().chunks(n) {
                for (acc, v) in rg.iter_mut().zip(chunk) {
                    *acc += v;
                }
            }
            accumulate(grads, *row, Array::matrix(1, n, rg).expect("row"));
        }
        Op::MulCol(a, col) => {
            let x = value(*a);
            let c = value(*col);
            let n = x.cols();
            let mut ga = g.clone();
            for (chunk, s) in ga.data_mut().chunks_mut(n).zip(c.data()) {
                chunk.iter_mut().for_each(|v| *v *= s);
            }
            accumulate(grads, *a, ga);
            let gc = g
                .data()
                .chunks(n)
                .zip(x.data().chunks(n))
                .map(|(gr, xr)| gr.iter().zip(xr).map(|(g, x)| g * x).sum())
                .collect();
            accumulate(grads, *col, Array::matrix(x.rows(), 1, gc).expect("col"));
        }
        Op::Affine(a, scale) => accumulate(grads, *a, g.map(|v| v * scale)),
        Op::ConcatCols(parts) => {
            let rows = g.rows();
            let mut offset = 0;
            for &p in parts {
                let w = value(p).cols();
                let mut data = Vec::with_capacity(rows * w);
                for r in 0..rows {
                    data.extend_from_slice(&g.row_slice(r)[offset..offset + w]);
                }
                accumulate(grads, p, Array::matrix(rows, w, data).expect("slice"));
                offset += w;
            }
        }
        Op::ConcatRows(parts) => {
            let cols = g.cols();
            let mut offset = 0;
            for &p in parts {
                let h = value(p).rows();
                let data = g.data()[offset * cols..(offset + h) * cols].to_vec();
                accumulate(grads, p, Array::matrix(h, cols, data).expect("slice"));
                offset += h;
            }
        }
        Op::SliceCols(a, start) => {
            let x = value(*a);
            let (rows, n, w) = (x.rows(), x.cols(), g.cols());
            let mut full = Array::zeros(rows, n);
            let d = full.data_mut();
            for r in 0..rows {
                d[r * n + start..r * n + start + w].copy_from_slice(g.row_slice(r));
            }
            accumulate(grads, *a, full);
        }
        Op::SliceRows(a, start) => {
            let x = value(*a);
            let n = x.cols();
            let mut full = Array::zeros(x.rows(), n);
            full.data_mut()[start * n..start * n + g.len()].copy_from_slice(g.data());
            accumulate(grads, *a, full);
        }
        Op::GatherRows(a, indices) => {
            let x = value(*a);
            let n = x.cols();
            let mut full = Array::zeros(x.rows(), n);
            let d = full.data_mut();
            for (out_row, &src) in indices.iter().enumerate() {
                for (acc, v) in d[src * n..(src + 1) * n].iter_mut().zip(g.row_slice(out_row)) {
                    *acc += v;
                }
            }
            accumulate(grads, *a, full);
        }
        Op::Pool {
            input,
            kind,
            lengths,
            argmax,
        } => {
            let x = value(*input);
            let n = x.cols();
            let mut full = Array::zeros(x.rows(), n);
            let d = full.data_mut();
            let mut start = 0;
            for (s, &len) in lengths.iter().enumerate() {
                let gs = g.row_slice(s);
                match kind {
                    PoolKind::Sum | PoolKind::Mean => {
                        let f = if *kind == PoolKind::Mean { 1.0 / len as f64 } else { 1.0 };
                        for r in start..start + len {
                            for (acc, v) in d[r * n..(r + 1) * n].iter_mut().zip(gs) {
                                *acc += v * f;
                            }
                        }
                    }
                    PoolKind::Max => {
                        for c in 0..n {
                            let r = argmax[s * n + c];
                            d[r * n + c] += gs[c];
                        }
                    }
                }
                start += len;
            }
            accumulate(grads, *input, full);
        }
        Op::Sigmoid(a) => accumulate(grads, *a, g.zip_map(&node.value, |g, y| g * y * (1.0 - y))),
        Op::Tanh(a) => accumulate(grads, *a, g.zip_map(&node.value, |g, y| g * (1.0 - y * y))),
        Op::LeakyRelu(a, slope) => accumulate(
            grads,
            *a,
            g.zip_map(value(*a), |g, x| if x > 0.0 { g } else { g * slope }),
        ),
        Op::Gelu(a) => accumulate(grads, *a, g.zip_map(value(*a), |g, x| g * gelu_derivative(x))),
        Op::Log(a) => accumulate(grads, *a, g.zip_map(value(*a), |g, x| g / x)),
        Op::LogSigmoid(a) => accumulate(grads, *a, g.zip_map(value(*a), |g, x| g * sigmoid(-x))),
        Op::Square(a) => accumulate(grads, *a, g.zip_map(value(*a), |g, x| 2.0 * g * x)),
        Op::SoftmaxRows(a) => {
            let y = &node.value;
            let n = y.cols();
            let mut gx = y.clone();
            for (out, (gr, yr)) in gx
                .data_mut()
                .chunks_mut(n)
                .zip(g.data().chunks(n).zip(y.data().chunks(n)))
            {
                let dot: f64 = gr.iter().zip(yr).map(|(g, y)| g * y).sum();
                for ((o, g), y) in out.iter_mut().zip(gr).zip(yr) {
                    *o = y * (g - dot);
                }
            }
            accumulate(grads, *a, gx);
        }
        Op::Sum(a) => {
            let x = value(*a);
            accumulate(grads, *a, x.map(|_| g.data()[0]));
        }
        Op::Mean(a) => {
            let x = value(*a);
            let f = g.data()[0] / x.len() as f64;
            accumulate(grads, *a, x.map(|_| f));
        }
        Op::RowSum(a) => {
            let x = value(*a);
            let n = x.cols();
            let mut full = Array::zeros_like(x);
            for (chunk, gv) in full.data_mut().chunks_mut(n).zip(g.data()) {
                chunk.iter_mut().for_each(|v| *v = *gv);
            }
            accumulate(grads, *a, full);
        }
    }
}
