//! Naive nested-loop reference implementations of the contrastive terms.
//! Shared by the core loss tests and the acceptance suite.

#![allow(dead_code)]

use chgnn_core::tensor::Matrix;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn cos(a: &[f64], b: &[f64]) -> f64 {
    dot(a, b) / (dot(a, a).sqrt().max(1e-12) * dot(b, b).sqrt().max(1e-12))
}

fn col(m: &Matrix, c: usize) -> Vec<f64> {
    (0..m.rows()).map(|r| m.get(r, c)).collect()
}

fn nll(pos: f64, all: &[f64]) -> f64 {
    let denom: f64 = all.iter().map(|x| x.exp()).sum();
    -(pos.exp() / denom).ln()
}

/// Shared two-view diagonal contrast over `k` candidates, given the
/// similarity of (view-1 item a, view-2 item b).
fn two_view(k: usize, sim: impl Fn(usize, usize) -> f64, table: &[f64]) -> f64 {
    let mut total = 0.0;
    for i in 0..k {
        let l1: Vec<f64> = (0..k).map(|j| sim(i, j) / table[i * k + j]).collect();
        total += nll(l1[i], &l1);
        let l2: Vec<f64> = (0..k).map(|j| sim(j, i) / table[j * k + i]).collect();
        total += nll(l2[i], &l2);
    }
    total / (2 * k) as f64
}

pub fn cluster(z1: &Matrix, z2: &Matrix, table: &[f64]) -> f64 {
    two_view(z1.cols(), |a, b| dot(&col(z1, a), &col(z2, b)), table)
}

pub fn hyperedge(z1: &Matrix, z2: &Matrix, table: &[f64]) -> f64 {
    if z1.rows() == 0 {
        return 0.0;
    }
    two_view(z1.rows(), |a, b| dot(z1.row(a), z2.row(b)), table)
}

pub fn node_cluster(zv: [&Matrix; 2], zc: [&Matrix; 2], tau: f64) -> f64 {
    let n = zv[0].rows();
    let mut total = 0.0;
    for (p, q) in [(0, 1), (1, 0)] {
        for i in 0..n {
            let logits: Vec<f64> = (0..n).map(|j| cos(zv[p].row(j), zc[q].row(i)) / tau).collect();
            total += nll(logits[i], &logits);
        }
    }
    total / (2 * n) as f64
}

/// Node-hyperedge (or hyperedge-cluster) loss. `edges[q]` lists the
/// members of view `q`'s hyperedges, the rows of `ze[q]`.
pub fn incidence(zn: [&Matrix; 2], ze: [&Matrix; 2], edges: [&[Vec<usize>]; 2], tau: f64) -> f64 {
    let n = zn[0].rows();
    let mut total = 0.0;
    let mut m = 0usize;
    for (p, q) in [(0, 1), (1, 0)] {
        for v in 0..n {
            for (e, members) in edges[q].iter().enumerate() {
                if !members.contains(&v) {
                    continue;
                }
                m += 1;
                let over_nodes: Vec<f64> = (0..n).map(|u| cos(zn[p].row(u), ze[q].row(e)) / tau).collect();
                total += nll(over_nodes[v], &over_nodes);
                let over_edges: Vec<f64> = (0..edges[q].len())
                    .map(|f| cos(zn[p].row(v), ze[q].row(f)) / tau)
                    .collect();
                total += nll(over_edges[e], &over_edges);
            }
        }
    }
    if m == 0 {
        0.0
    } else {
        total / m as f64
    }
}

/// Homogeneity by scanning every hyperedge for every member pair.
pub fn homogeneity(edges: &[Vec<usize>], e: usize) -> f64 {
    let members = &edges[e];
    if members.len() < 2 {
        return 1.0;
    }
    let mut total = 0.0;
    let mut pairs = 0.0;
    for a in 0..members.len() {
        for b in a + 1..members.len() {
            let (u, w) = (members[a], members[b]);
            total += edges.iter().filter(|f| f.contains(&u) && f.contains(&w)).count() as f64;
            pairs += 1.0;
        }
    }
    1.0 / (1.0 + (-total / pairs).exp())
}

/// Overlapness by scanning for incident hyperedges and marking members.
pub fn overlapness(num_nodes: usize, edges: &[Vec<usize>], v: usize) -> Option<f64> {
    let mut seen = vec![false; num_nodes];
    let mut total = 0usize;
    let mut any = false;
    for f in edges.iter().filter(|f| f.contains(&v)) {
        any = true;
        total += f.len();
        for &u in f {
            seen[u] = true;
        }
    }
    let distinct = seen.iter().filter(|&&s| s).count();
    any.then(|| total as f64 / distinct as f64)
}
