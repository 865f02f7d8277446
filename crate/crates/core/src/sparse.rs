//! Constant sparse operands: CSR feature matrices and node/hyperedge
//! incidence lists used by the aggregation primitives.

use alloc::vec;
use alloc::vec::Vec;

/// Compressed sparse row matrix. Never differentiated; it only appears
/// as the constant left operand of a product.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrMatrix {
    rows: usize,
    cols: usize,
    indptr: Vec<usize>,
    indices: Vec<usize>,
    values: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(rows: usize, cols: usize, data: &[f64]) -> Self {
        assert_eq!(data.len(), rows * cols, "dense buffer does not match shape");
        let mut indptr = Vec::with_capacity(rows + 1);
        let mut indices = Vec::new();
        let mut values = Vec::new();
        indptr.push(0);
        for r in 0..rows {
            for (c, &v) in data[r * cols..(r + 1) * cols].iter().enumerate() {
                if v != 0.0 {
                    indices.push(c);
                    values.push(v);
                }
            }
            indptr.push(indices.len());
        }
        Self {
            rows,
            cols,
            indptr,
            indices,
            values,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn nnz(&self) -> usize {
        self.values.len()
    }

    pub fn row(&self, r: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.indptr[r]..self.indptr[r + 1];
        self.indices[span.clone()]
            .iter()
            .copied()
            .zip(self.values[span].iter().copied())
    }

    /// `self · b` where `b` is a dense `cols × width` buffer.
    pub fn mul_dense(&self, b: &[f64], width: usize) -> Vec<f64> {
        assert_eq!(b.len(), self.cols * width);
        let mut out = vec![0.0; self.rows * width];
        for r in 0..self.rows {
            let dst = &mut out[r * width..(r + 1) * width];
            for (c, v) in self.row(r) {
                let src = &b[c * width..(c + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
        out
    }

    /// `selfᵀ · g` where `g` is a dense `rows × width` buffer, accumulated
    /// into `out` (`cols × width`).
    pub fn t_mul_dense_into(&self, g: &[f64], width: usize, out: &mut [f64]) {
        assert_eq!(g.len(), self.rows * width);
        assert_eq!(out.len(), self.cols * width);
        for r in 0..self.rows {
            let src = &g[r * width..(r + 1) * width];
            for (c, v) in self.row(r) {
                let dst = &mut out[c * width..(c + 1) * width];
                for (d, s) in dst.iter_mut().zip(src) {
                    *d += v * s;
                }
            }
        }
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.rows * self.cols];
        for r in 0..self.rows {
            for (c, v) in self.row(r) {
                out[r * self.cols + c] = v;
            }
        }
        out
    }
}

/// Membership lists of a (possibly augmented) hypergraph, indexed by
/// local hyperedge position.
#[derive(Debug, Clone, PartialEq)]
pub struct Incidence {
    num_nodes: usize,
    members: Vec<Vec<usize>>,
}

impl Incidence {
    pub fn new(num_nodes: usize, members: Vec<Vec<usize>>) -> Self {
        debug_assert!(members.iter().flatten().all(|&v| v < num_nodes));
        Self { num_nodes, members }
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_edges(&self) -> usize {
        self.members.len()
    }

    pub fn members(&self, e: usize) -> &[usize] {
        &self.members[e]
    }

    pub fn all_members(&self) -> &[Vec<usize>] {
        &self.members
    }

    /// Number of (node, hyperedge) incidences.
    pub fn num_pairs(&self) -> usize {
        self.members.iter().map(Vec::len).sum()
    }

    /// All incidences as (node, local hyperedge) in hyperedge-major order.
    pub fn pairs(&self) -> Vec<(usize, usize)> {
        self.members
            .iter()
            .enumerate()
            .flat_map(|(e, m)| m.iter().map(move |&v| (v, e)))
            .collect()
    }
}
