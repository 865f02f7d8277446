//! Dense matrices and a tape for reverse-mode differentiation.
//!
//! Every value is a row-major `f64` matrix; scalars are `1 × 1`. A
//! [`Tape`] owns the nodes of one computation. Operations append a node
//! and return a [`Var`] handle, so node ids are a topological order and
//! the backward sweep is a single reverse pass over the tape.
//!
//! ```
//! use chgnn_core::tensor::{Matrix, Tape};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Matrix::scalar(3.0));
//! let y = tape.mul(x, x);
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &[6.0]);
//! ```

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::rng::RngState;
use crate::sparse::{CsrMatrix, Incidence};

#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(
            data.len(),
            rows * cols,
            "buffer of length {} does not fit {rows}x{cols}",
            data.len()
        );
        Self { rows, cols, data }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::new(rows, cols, vec![0.0; rows * cols])
    }

    pub fn filled(rows: usize, cols: usize, value: f64) -> Self {
        Self::new(rows, cols, vec![value; rows * cols])
    }

    pub fn scalar(value: f64) -> Self {
        Self::new(1, 1, vec![value])
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m.data[i * n + i] = 1.0;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Self {
        let cols = rows.first().map_or(0, Vec::len);
        let data = rows.iter().flat_map(|r| r.iter().copied()).collect();
        Self::new(rows.len(), cols, data)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> [usize; 2] {
        [self.rows, self.cols]
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn column(&self, c: usize) -> Vec<f64> {
        (0..self.rows).map(|r| self.get(r, c)).collect()
    }

    pub fn transpose(&self) -> Matrix {
        let mut out = Matrix::zeros(self.cols, self.rows);
        for r in 0..self.rows {
            for c in 0..self.cols {
                out.data[c * self.rows + r] = self.data[r * self.cols + c];
            }
        }
        out
    }

    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul inner dimensions differ");
        let mut out = Matrix::zeros(self.rows, other.cols);
        gemm(
            self.rows, self.cols, other.cols, &self.data, false, &other.data, false,
            &mut out.data,
        );
        out
    }

    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::new(idx.len(), self.cols, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|v| v.is_finite())
    }

    /// Row index of the largest entry per row (first on ties).
    pub fn argmax_rows(&self) -> Vec<usize> {
        (0..self.rows)
            .map(|r| {
                let row = self.row(r);
                let mut best = 0;
                for (i, &v) in row.iter().enumerate() {
                    if v > row[best] {
                        best = i;
                    }
                }
                best
            })
            .collect()
    }
}

/// `c += op(a) · op(b)`, with `op` an optional transpose. Shapes are given
/// after the transpose: `op(a)` is `m × k`, `op(b)` is `k × n`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    a_t: bool,
    b: &[f64],
    b_t: bool,
    c: &mut [f64],
) {
    if m == 0 || n == 0 || k == 0 {
        return;
    }
    let (rsa, csa) = if a_t { (1, m as isize) } else { (k as isize, 1) };
    let (rsb, csb) = if b_t { (1, k as isize) } else { (n as isize, 1) };
    debug_assert_eq!(a.len(), m * k);
    debug_assert_eq!(b.len(), k * n);
    debug_assert_eq!(c.len(), m * n);
    // SAFETY: strides describe buffers of exactly m*k, k*n and m*n
    // elements, checked above.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            1.0,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    MatMulNT(Var, Var),
    SpMatMul(Arc<CsrMatrix>, Var),
    Transpose(Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Div(Var, Var),
    AddRow(Var, Var),
    MulCol(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    MulConst(Var, Arc<Vec<f64>>),
    Exp(Var),
    Ln(Var),
    Sigmoid(Var),
    Relu(Var),
    SoftmaxRows(Var),
    LogSoftmaxRows(Var),
    SumAll(Var),
    MeanAll(Var),
    SumRows(Var),
    SumCols(Var),
    MeanRows(Var),
    MeanCols(Var),
    NormalizeRows(Var, Vec<(f64, bool)>),
    ConcatRows(Vec<Var>),
    ConcatCols(Vec<Var>),
    GatherRows(Var, Vec<usize>),
    SliceCols(Var, usize),
    Pick(Var, Vec<(usize, usize)>),
    SegmentMean(Var, Arc<Incidence>),
    Scatter(Var, Var, Arc<Incidence>),
    StraightThrough(Var),
}

impl Op {
    fn inputs(&self) -> Vec<Var> {
        use Op::*;
        match self {
            Leaf => Vec::new(),
            MatMul(a, b) | MatMulNT(a, b) | Add(a, b) | Sub(a, b) | Mul(a, b) | Div(a, b)
            | AddRow(a, b) | MulCol(a, b) | Scatter(a, b, _) => vec![*a, *b],
            ConcatRows(v) | ConcatCols(v) => v.clone(),
            SpMatMul(_, a) | Transpose(a) | Scale(a, _) | AddScalar(a) | MulConst(a, _)
            | Exp(a) | Ln(a) | Sigmoid(a) | Relu(a) | SoftmaxRows(a) | LogSoftmaxRows(a)
            | SumAll(a) | MeanAll(a) | SumRows(a) | SumCols(a) | MeanRows(a) | MeanCols(a)
            | NormalizeRows(a, _) | GatherRows(a, _) | SliceCols(a, _) | Pick(a, _)
            | SegmentMean(a, _) | StraightThrough(a) => vec![*a],
        }
    }
}

#[derive(Debug, Clone)]
struct Node {
    value: Matrix,
    grad: Option<Vec<f64>>,
    requires_grad: bool,
    op: Op,
}

/// Append-only record of one computation.
#[derive(Debug, Clone, Default)]
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

    /// A leaf that receives a gradient.
    pub fn param(&mut self, value: Matrix) -> Var {
        self.leaf(value, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Matrix) -> Var {
        self.leaf(value, false)
    }

    pub fn leaf(&mut self, value: Matrix, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op: Op::Leaf,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> [usize; 2] {
        self.nodes[v.0].value.shape()
    }

    pub fn scalar(&self, v: Var) -> f64 {
        let m = self.value(v);
        assert_eq!(m.len(), 1, "value is not a scalar");
        m.data[0]
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].grad.as_deref()
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        let requires_grad = op.inputs().iter().any(|i| self.nodes[i.0].requires_grad);
        self.nodes.push(Node {
            value,
            grad: None,
            requires_grad,
            op,
        });
        Var(self.nodes.len() - 1)
    }

    fn map(&mut self, a: Var, f: impl Fn(f64) -> f64, op: Op) -> Var {
        let src = self.value(a);
        let data = src.data.iter().map(|&x| f(x)).collect();
        let value = Matrix::new(src.rows, src.cols, data);
        self.push(value, op)
    }

    fn zip(&mut self, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op, name: &str) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.shape(), y.shape(), "{name}: shapes differ");
        let data = x.data.iter().zip(&y.data).map(|(&p, &q)| f(p, q)).collect();
        let value = Matrix::new(x.rows, x.cols, data);
        self.push(value, op)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let value = self.value(a).matmul(self.value(b));
        self.push(value, Op::MatMul(a, b))
    }

    /// `a · bᵀ`, e.g. all pairwise inner products of two row sets.
    pub fn matmul_nt(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (self.value(a), self.value(b));
        assert_eq!(x.cols, y.cols, "matmul_nt: inner dimensions differ");
        let mut out = Matrix::zeros(x.rows, y.rows);
        gemm(x.rows, x.cols, y.rows, &x.data, false, &y.data, true, &mut out.data);
        self.push(out, Op::MatMulNT(a, b))
    }

    /// Constant sparse matrix times a tape value.
    pub fn sp_matmul(&mut self, sparse: &Arc<CsrMatrix>, b: Var) -> Var {
        let y = self.value(b);
        assert_eq!(sparse.cols(), y.rows, "sp_matmul: inner dimensions differ");
        let data = sparse.mul_dense(&y.data, y.cols);
        let value = Matrix::new(sparse.rows(), y.cols, data);
        self.push(value, Op::SpMatMul(sparse.clone(), b))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x + y, Op::Add(a, b), "add")
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x - y, Op::Sub(a, b), "sub")
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x * y, Op::Mul(a, b), "mul")
    }

    pub fn div(&mut self, a: Var, b: Var) -> Var {
        self.zip(a, b, |x, y| x / y, Op::Div(a, b), "div")
    }

    /// Adds a `1 × c` row to every row of `a`.
    pub fn add_row(&mut self, a: Var, row: Var) -> Var {
        let (x, r) = (self.value(a), self.value(row));
        assert_eq!(r.shape(), [1, x.cols], "add_row: bias must be 1 x cols");
        let mut value = x.clone();
        for chunk in value.data.chunks_mut(x.cols.max(1)) {
            for (v, b) in chunk.iter_mut().zip(&r.data) {
                *v += b;
            }
        }
        self.push(value, Op::AddRow(a, row))
    }

    /// Scales row `i` of `a` by entry `i` of the `r × 1` column `col`.
    pub fn mul_col(&mut self, a: Var, col: Var) -> Var {
        let (x, s) = (self.value(a), self.value(col));
        assert_eq!(s.shape(), [x.rows, 1], "mul_col: scale must be rows x 1");
        let mut value = x.clone();
        for (chunk, &k) in value.data.chunks_mut(x.cols.max(1)).zip(&s.data) {
            for v in chunk {
                *v *= k;
            }
        }
        self.push(value, Op::MulCol(a, col))
    }

    pub fn scale(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| x * k, Op::Scale(a, k))
    }

    pub fn add_scalar(&mut self, a: Var, k: f64) -> Var {
        self.map(a, |x| x + k, Op::AddScalar(a))
    }

    /// Elementwise product with a constant buffer of the same shape.
    pub fn mul_const(&mut self, a: Var, k: Arc<Vec<f64>>) -> Var {
        let x = self.value(a);
        assert_eq!(k.len(), x.len(), "mul_const: buffer length differs");
        let data = x.data.iter().zip(k.iter()).map(|(p, q)| p * q).collect();
        let value = Matrix::new(x.rows, x.cols, data);
        self.push(value, Op::MulConst(a, k))
    }

    pub fn exp(&mut self, a: Var) -> Var {
        self.map(a, libm::exp, Op::Exp(a))
    }

    pub fn ln(&mut self, a: Var) -> Var {
        self.map(a, libm::log, Op::Ln(a))
    }

    pub fn sigmoid(&mut self, a: Var) -> Var {
        self.map(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        self.map(a, |x| if x > 0.0 { x } else { 0.0 }, Op::Relu(a))
    }

    pub fn softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        for row in value.data.chunks_mut(x.cols.max(1)) {
            softmax_in_place(row);
        }
        self.push(value, Op::SoftmaxRows(a))
    }

    pub fn log_softmax_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        for row in value.data.chunks_mut(x.cols.max(1)) {
            let lse = log_sum_exp(row);
            for v in row {
                *v -= lse;
            }
        }
        self.push(value, Op::LogSoftmaxRows(a))
    }

    pub fn softmax_cols(&mut self, a: Var) -> Var {
        let t = self.transpose(a);
        let s = self.softmax_rows(t);
        self.transpose(s)
    }

    pub fn log_softmax_cols(&mut self, a: Var) -> Var {
        let t = self.transpose(a);
        let s = self.log_softmax_rows(t);
        self.transpose(s)
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let s = self.value(a).data.iter().sum();
        self.push(Matrix::scalar(s), Op::SumAll(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let s = x.data.iter().sum::<f64>() / x.len().max(1) as f64;
        self.push(Matrix::scalar(s), Op::MeanAll(a))
    }

    /// Per-row sums, `r × 1`.
    pub fn sum_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let data = (0..x.rows).map(|r| x.row(r).iter().sum()).collect();
        let value = Matrix::new(x.rows, 1, data);
        self.push(value, Op::SumRows(a))
    }

    /// Per-column sums, `1 × c`.
    pub fn sum_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let mut data = vec![0.0; x.cols];
        for r in 0..x.rows {
            for (d, v) in data.iter_mut().zip(x.row(r)) {
                *d += v;
            }
        }
        let value = Matrix::new(1, x.cols, data);
        self.push(value, Op::SumCols(a))
    }

    pub fn mean_rows(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let k = x.cols.max(1) as f64;
        let data = (0..x.rows).map(|r| x.row(r).iter().sum::<f64>() / k).collect();
        let value = Matrix::new(x.rows, 1, data);
        self.push(value, Op::MeanRows(a))
    }

    pub fn mean_cols(&mut self, a: Var) -> Var {
        let x = self.value(a);
        let k = x.rows.max(1) as f64;
        let mut data = vec![0.0; x.cols];
        for r in 0..x.rows {
            for (d, v) in data.iter_mut().zip(x.row(r)) {
                *d += v / k;
            }
        }
        let value = Matrix::new(1, x.cols, data);
        self.push(value, Op::MeanCols(a))
    }

    /// Rows scaled to unit L2 norm; rows with norm below `eps` are divided
    /// by `eps` instead.
    pub fn normalize_rows(&mut self, a: Var, eps: f64) -> Var {
        let x = self.value(a);
        let mut value = x.clone();
        let mut norms = Vec::with_capacity(x.rows);
        for row in value.data.chunks_mut(x.cols.max(1)) {
            let n = libm::sqrt(row.iter().map(|v| v * v).sum::<f64>());
            let d = if n > eps { n } else { eps };
            for v in row.iter_mut() {
                *v /= d;
            }
            norms.push((d, n > eps));
        }
        self.push(value, Op::NormalizeRows(a, norms))
    }

    /// Row-wise inner product of two equally shaped matrices, `r × 1`.
    pub fn row_dot(&mut self, a: Var, b: Var) -> Var {
        let p = self.mul(a, b);
        self.sum_rows(p)
    }

    pub fn concat_rows(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_rows: nothing to concatenate");
        let cols = self.value(parts[0]).cols;
        let mut data = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.cols, cols, "concat_rows: column counts differ");
            data.extend_from_slice(&m.data);
            rows += m.rows;
        }
        self.push(Matrix::new(rows, cols, data), Op::ConcatRows(parts.to_vec()))
    }

    pub fn concat_cols(&mut self, parts: &[Var]) -> Var {
        assert!(!parts.is_empty(), "concat_cols: nothing to concatenate");
        let rows = self.value(parts[0]).rows;
        let cols: usize = parts.iter().map(|&p| self.value(p).cols).sum();
        let mut out = Matrix::zeros(rows, cols);
        let mut offset = 0;
        for &p in parts {
            let m = self.value(p);
            assert_eq!(m.rows, rows, "concat_cols: row counts differ");
            for r in 0..rows {
                out.data[r * cols + offset..r * cols + offset + m.cols].copy_from_slice(m.row(r));
            }
            offset += m.cols;
        }
        self.push(out, Op::ConcatCols(parts.to_vec()))
    }

    pub fn gather_rows(&mut self, a: Var, idx: &[usize]) -> Var {
        let x = self.value(a);
        for &i in idx {
            assert!(i < x.rows, "gather_rows: index {i} out of range {}", x.rows);
        }
        let value = x.select_rows(idx);
        self.push(value, Op::GatherRows(a, idx.to_vec()))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&mut self, a: Var, start: usize, end: usize) -> Var {
        let x = self.value(a);
        assert!(start <= end && end <= x.cols, "slice_cols: bad range");
        let w = end - start;
        let mut data = Vec::with_capacity(x.rows * w);
        for r in 0..x.rows {
            data.extend_from_slice(&x.row(r)[start..end]);
        }
        self.push(Matrix::new(x.rows, w, data), Op::SliceCols(a, start))
    }

    /// Selected entries as a `k × 1` column.
    pub fn pick(&mut self, a: Var, at: &[(usize, usize)]) -> Var {
        let x = self.value(a);
        let data = at
            .iter()
            .map(|&(r, c)| {
                assert!(r < x.rows && c < x.cols, "pick: ({r},{c}) out of range");
                x.get(r, c)
            })
            .collect();
        self.push(Matrix::new(at.len(), 1, data), Op::Pick(a, at.to_vec()))
    }

    /// Mean of member rows for every hyperedge of `inc` (`|E| × c`).
    pub fn segment_mean(&mut self, a: Var, inc: &Arc<Incidence>) -> Var {
        let x = self.value(a);
        assert_eq!(x.rows, inc.num_nodes(), "segment_mean: row count differs");
        let mut out = Matrix::zeros(inc.num_edges(), x.cols);
        for (e, members) in inc.all_members().iter().enumerate() {
            if members.is_empty() {
                continue;
            }
            let k = members.len() as f64;
            let dst = &mut out.data[e * x.cols..(e + 1) * x.cols];
            for &v in members {
                for (d, s) in dst.iter_mut().zip(x.row(v)) {
                    *d += s;
                }
            }
            for d in dst {
                *d /= k;
            }
        }
        self.push(out, Op::SegmentMean(a, inc.clone()))
    }

    /// Per node, the weighted sum of its incident hyperedge rows:
    /// `out[v] = Σ_{e ∋ v} w[e] · h[e]` (`n × c`).
    pub fn scatter_weighted(&mut self, edges: Var, weights: Var, inc: &Arc<Incidence>) -> Var {
        let (h, w) = (self.value(edges), self.value(weights));
        assert_eq!(h.rows, inc.num_edges(), "scatter_weighted: edge rows differ");
        assert_eq!(w.shape(), [inc.num_edges(), 1], "scatter_weighted: weights must be |E| x 1");
        let c = h.cols;
        let mut out = Matrix::zeros(inc.num_nodes(), c);
        for (e, members) in inc.all_members().iter().enumerate() {
            let we = w.data[e];
            let src = h.row(e);
            for &v in members {
                for (d, s) in out.data[v * c..(v + 1) * c].iter_mut().zip(src) {
                    *d += we * s;
                }
            }
        }
        self.push(out, Op::Scatter(edges, weights, inc.clone()))
    }

    /// Forward value `hard`, backward identity into `soft`.
    pub fn straight_through(&mut self, soft: Var, hard: Matrix) -> Var {
        assert_eq!(self.shape(soft), hard.shape(), "straight_through: shapes differ");
        self.push(hard, Op::StraightThrough(soft))
    }

    /// Gumbel-softmax relaxation of categorical rows of `logits` using
    /// supplied noise. With `hard`, the forward value is the one-hot argmax
    /// and gradients flow through the soft sample.
    pub fn gumbel_softmax_with_noise(
        &mut self,
        logits: Var,
        noise: &[f64],
        temperature: f64,
        hard: bool,
    ) -> Result<Var> {
        if !(temperature > 0.0) || !temperature.is_finite() {
            return Err(Error::Parameter(format!(
                "gumbel temperature must be positive, got {temperature}"
            )));
        }
        let shape = self.shape(logits);
        if noise.len() != shape[0] * shape[1] {
            return Err(Error::Shape(format!(
                "gumbel noise length {} for logits {}x{}",
                noise.len(),
                shape[0],
                shape[1]
            )));
        }
        let noise = self.constant(Matrix::new(shape[0], shape[1], noise.to_vec()));
        let perturbed = self.add(logits, noise);
        let scaled = self.scale(perturbed, 1.0 / temperature);
        let soft = self.softmax_rows(scaled);
        if !hard {
            return Ok(soft);
        }
        let one_hot = one_hot_rows(&self.value(soft).argmax_rows(), shape[1]);
        Ok(self.straight_through(soft, one_hot))
    }

    pub fn gumbel_softmax(
        &mut self,
        logits: Var,
        temperature: f64,
        hard: bool,
        rng: &mut RngState,
    ) -> Result<Var> {
        let n = self.value(logits).len();
        let noise = rng.gumbel_vec(n);
        self.gumbel_softmax_with_noise(logits, &noise, temperature, hard)
    }

    /// Populates `grad` of every gradient-requiring node reachable from
    /// `loss`. Repeated calls accumulate.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let shape = self.shape(loss);
        if shape != [1, 1] {
            return Err(Error::Shape(format!(
                "backward needs a scalar, got {}x{}",
                shape[0], shape[1]
            )));
        }
        let n = loss.0 + 1;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; n];
        grads[loss.0] = Some(vec![1.0]);
        for id in (0..n).rev() {
            let Some(g) = grads[id].take() else { continue };
            if !self.nodes[id].requires_grad {
                continue;
            }
            for input in self.nodes[id].op.inputs() {
                if input.0 >= id {
                    return Err(Error::Internal(format!(
                        "tape node {id} depends on later node {}",
                        input.0
                    )));
                }
            }
            self.propagate(id, &g, &mut grads);
            let node = &mut self.nodes[id];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, b)| *a += b),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[id];
        let out = &node.value;
        let mut send = |v: Var, f: &mut dyn FnMut(&mut [f64])| {
            if !self.nodes[v.0].requires_grad {
                return;
            }
            let len = self.nodes[v.0].value.len();
            let buf = grads[v.0].get_or_insert_with(|| vec![0.0; len]);
            f(buf);
        };
        match &node.op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (x, y) = (self.value(*a), self.value(*b));
                send(*a, &mut |buf| {
                    gemm(x.rows, y.cols, x.cols, g, false, &y.data, true, buf)
                });
                send(*b, &mut |buf| {
                    gemm(x.cols, x.rows, y.cols, &x.data, true, g, false, buf)
                });
            }
            Op::MatMulNT(a, b) => {
                // out = x · yᵀ, x: m×k, y: n×k
                let (x, y) = (self.value(*a), self.value(*b));
                send(*a, &mut |buf| {
                    gemm(x.rows, y.rows, x.cols, g, false, &y.data, false, buf)
                });
                send(*b, &mut |buf| {
                    gemm(y.rows, x.rows, x.cols, g, true, &x.data, false, buf)
                });
            }
            Op::SpMatMul(sp, b) => {
                send(*b, &mut |buf| sp.t_mul_dense_into(g, out.cols, buf));
            }
            Op::Transpose(a) => {
                let (r, c) = (out.rows, out.cols);
                send(*a, &mut |buf| {
                    for i in 0..r {
                        for j in 0..c {
                            buf[j * r + i] += g[i * c + j];
                        }
                    }
                });
            }
            Op::Add(a, b) => {
                send(*a, &mut |buf| add_into(buf, g));
                send(*b, &mut |buf| add_into(buf, g));
            }
            Op::Sub(a, b) => {
                send(*a, &mut |buf| add_into(buf, g));
                send(*b, &mut |buf| buf.iter_mut().zip(g).for_each(|(d, s)| *d -= s));
            }
            Op::Mul(a, b) => {
                let (x, y) = (&self.value(*a).data, &self.value(*b).data);
                send(*a, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * y[i];
                    }
                });
                send(*b, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] * x[i];
                    }
                });
            }
            Op::Div(a, b) => {
                let (x, y) = (&self.value(*a).data, &self.value(*b).data);
                send(*a, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] / y[i];
                    }
                });
                send(*b, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] -= g[i] * x[i] / (y[i] * y[i]);
                    }
                });
            }
            Op::AddRow(a, row) => {
                send(*a, &mut |buf| add_into(buf, g));
                let c = out.cols;
                send(*row, &mut |buf| {
                    for chunk in g.chunks(c.max(1)) {
                        add_into(buf, chunk);
                    }
                });
            }
            Op::MulCol(a, col) => {
                let (x, s) = (self.value(*a), self.value(*col));
                let c = x.cols;
                send(*a, &mut |buf| {
                    for r in 0..x.rows {
                        for j in 0..c {
                            buf[r * c + j] += g[r * c + j] * s.data[r];
                        }
                    }
                });
                send(*col, &mut |buf| {
                    for r in 0..x.rows {
                        buf[r] += dot(&g[r * c..(r + 1) * c], x.row(r));
                    }
                });
            }
            Op::Scale(a, k) => send(*a, &mut |buf| {
                buf.iter_mut().zip(g).for_each(|(d, s)| *d += k * s)
            }),
            Op::AddScalar(a) => send(*a, &mut |buf| add_into(buf, g)),
            Op::MulConst(a, k) => send(*a, &mut |buf| {
                for i in 0..buf.len() {
                    buf[i] += g[i] * k[i];
                }
            }),
            Op::Exp(a) => send(*a, &mut |buf| {
                for i in 0..buf.len() {
                    buf[i] += g[i] * out.data[i];
                }
            }),
            Op::Ln(a) => {
                let x = &self.value(*a).data;
                send(*a, &mut |buf| {
                    for i in 0..buf.len() {
                        buf[i] += g[i] / x[i];
                    }
                });
            }
            Op::Sigmoid(a) => send(*a, &mut |buf| {
                for i in 0..buf.len() {
                    let y = out.data[i];
                    buf[i] += g[i] * y * (1.0 - y);
                }
            }),
            Op::Relu(a) => {
                let x = &self.value(*a).data;
                send(*a, &mut |buf| {
                    for i in 0..buf.len() {
                        if x[i] > 0.0 {
                            buf[i] += g[i];
                        }
                    }
                });
            }
            Op::SoftmaxRows(a) => {
                let c = out.cols.max(1);
                send(*a, &mut |buf| {
                    for ((dst, y), gr) in buf.chunks_mut(c).zip(out.data.chunks(c)).zip(g.chunks(c)) {
                        let inner = dot(gr, y);
                        for j in 0..dst.len() {
                            dst[j] += y[j] * (gr[j] - inner);
                        }
                    }
                });
            }
            Op::LogSoftmaxRows(a) => {
                let c = out.cols.max(1);
                send(*a, &mut |buf| {
                    for ((dst, y), gr) in buf.chunks_mut(c).zip(out.data.chunks(c)).zip(g.chunks(c)) {
                        let total: f64 = gr.iter().sum();
                        for j in 0..dst.len() {
                            dst[j] += gr[j] - libm::exp(y[j]) * total;
                        }
                    }
                });
            }
            Op::SumAll(a) => send(*a, &mut |buf| buf.iter_mut().for_each(|d| *d += g[0])),
            Op::MeanAll(a) => send(*a, &mut |buf| {
                let k = g[0] / buf.len().max(1) as f64;
                buf.iter_mut().for_each(|d| *d += k)
            }),
            Op::SumRows(a) | Op::MeanRows(a) => {
                let x = self.value(*a);
                let k = if matches!(node.op, Op::MeanRows(_)) {
                    1.0 / x.cols.max(1) as f64
                } else {
                    1.0
                };
                send(*a, &mut |buf| {
                    for (r, chunk) in buf.chunks_mut(x.cols.max(1)).enumerate() {
                        chunk.iter_mut().for_each(|d| *d += k * g[r]);
                    }
                });
            }
            Op::SumCols(a) | Op::MeanCols(a) => {
                let x = self.value(*a);
                let k = if matches!(node.op, Op::MeanCols(_)) {
                    1.0 / x.rows.max(1) as f64
                } else {
                    1.0
                };
                send(*a, &mut |buf| {
                    for chunk in buf.chunks_mut(x.cols.max(1)) {
                        chunk.iter_mut().zip(g).for_each(|(d, s)| *d += k * s);
                    }
                });
            }
            Op::NormalizeRows(a, norms) => {
                let c = out.cols.max(1);
                send(*a, &mut |buf| {
                    for (r, dst) in buf.chunks_mut(c).enumerate() {
                        let gr = &g[r * c..(r + 1) * c];
                        let (d, unit) = norms[r];
                        // below eps the map is the fixed scaling x / eps
                        let proj = if unit { dot(&out.data[r * c..(r + 1) * c], gr) } else { 0.0 };
                        for j in 0..dst.len() {
                            dst[j] += (gr[j] - out.data[r * c + j] * proj) / d;
                        }
                    }
                });
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let len = self.value(p).len();
                    send(p, &mut |buf| add_into(buf, &g[offset..offset + len]));
                    offset += len;
                }
            }
            Op::ConcatCols(parts) => {
                let total = out.cols;
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols;
                    send(p, &mut |buf| {
                        for (r, dst) in buf.chunks_mut(w.max(1)).enumerate() {
                            add_into(dst, &g[r * total + offset..r * total + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::GatherRows(a, idx) => {
                let c = out.cols;
                send(*a, &mut |buf| {
                    for (k, &i) in idx.iter().enumerate() {
                        add_into(&mut buf[i * c..(i + 1) * c], &g[k * c..(k + 1) * c]);
                    }
                });
            }
            Op::SliceCols(a, start) => {
                let w = out.cols;
                let c = self.value(*a).cols;
                send(*a, &mut |buf| {
                    for r in 0..out.rows {
                        add_into(&mut buf[r * c + start..r * c + start + w], &g[r * w..(r + 1) * w]);
                    }
                });
            }
            Op::Pick(a, at) => {
                let c = self.value(*a).cols;
                send(*a, &mut |buf| {
                    for (k, &(r, j)) in at.iter().enumerate() {
                        buf[r * c + j] += g[k];
                    }
                });
            }
            Op::SegmentMean(a, inc) => {
                let c = out.cols;
                send(*a, &mut |buf| {
                    for (e, members) in inc.all_members().iter().enumerate() {
                        if members.is_empty() {
                            continue;
                        }
                        let k = 1.0 / members.len() as f64;
                        let src = &g[e * c..(e + 1) * c];
                        for &v in members {
                            buf[v * c..(v + 1) * c]
                                .iter_mut()
                                .zip(src)
                                .for_each(|(d, s)| *d += k * s);
                        }
                    }
                });
            }
            Op::Scatter(edges, weights, inc) => {
                let (h, w) = (self.value(*edges), self.value(*weights));
                let c = h.cols;
                send(*edges, &mut |buf| {
                    for (e, members) in inc.all_members().iter().enumerate() {
                        let dst = &mut buf[e * c..(e + 1) * c];
                        for &v in members {
                            dst.iter_mut()
                                .zip(&g[v * c..(v + 1) * c])
                                .for_each(|(d, s)| *d += w.data[e] * s);
                        }
                    }
                });
                send(*weights, &mut |buf| {
                    for (e, members) in inc.all_members().iter().enumerate() {
                        for &v in members {
                            buf[e] += dot(&g[v * c..(v + 1) * c], h.row(e));
                        }
                    }
                });
            }
            Op::StraightThrough(soft) => send(*soft, &mut |buf| add_into(buf, g)),
        }
    }
}

fn add_into(dst: &mut [f64], src: &[f64]) {
    dst.iter_mut().zip(src).for_each(|(d, s)| *d += s);
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    m + libm::log(xs.iter().map(|&x| libm::exp(x - m)).sum::<f64>())
}

pub fn softmax_in_place(row: &mut [f64]) {
    let m = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for v in row.iter_mut() {
        *v = libm::exp(*v - m);
        total += *v;
    }
    for v in row.iter_mut() {
        *v /= total;
    }
}

pub fn one_hot_rows(indices: &[usize], width: usize) -> Matrix {
    let mut m = Matrix::zeros(indices.len(), width);
    for (r, &i) in indices.iter().enumerate() {
        m.set(r, i, 1.0);
    }
    m
}
