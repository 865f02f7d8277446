//! Hypergraph data model and structural analytics: egonets, hyperedge
//! homogeneity, node overlapness and overlapness-based masking
//! probabilities.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::Incidence;
use crate::tensor::{sigmoid, Matrix};

#[derive(Debug, Clone, PartialEq)]
pub struct Hypergraph {
    num_nodes: usize,
    num_classes: usize,
    hyperedges: Vec<Vec<usize>>,
    features: Matrix,
    labels: Option<Vec<usize>>,
}

impl Hypergraph {
    /// Builds a validated hypergraph.
    pub fn new(
        num_nodes: usize,
        num_classes: usize,
        hyperedges: Vec<Vec<usize>>,
        features: Matrix,
        labels: Option<Vec<usize>>,
    ) -> Result<Self> {
        for (i, e) in hyperedges.iter().enumerate() {
            if e.is_empty() {
                return Err(Error::EmptyHyperedge(i));
            }
            let mut seen = BTreeSet::new();
            for &v in e {
                if v >= num_nodes {
                    return Err(Error::NodeOutOfRange {
                        hyperedge: i,
                        node: v,
                        num_nodes,
                    });
                }
                if !seen.insert(v) {
                    return Err(Error::DuplicateNode { hyperedge: i, node: v });
                }
            }
        }
        if features.rows() != num_nodes {
            return Err(Error::Features(format!(
                "{} feature rows for {num_nodes} nodes",
                features.rows()
            )));
        }
        if let Some(idx) = features.data().iter().position(|v| !v.is_finite()) {
            let cols = features.cols().max(1);
            return Err(Error::Features(format!(
                "non-finite value at row {}, column {}",
                idx / cols,
                idx % cols
            )));
        }
        if let Some(labels) = &labels {
            if labels.len() != num_nodes {
                return Err(Error::Validation(format!(
                    "{} labels for {num_nodes} nodes",
                    labels.len()
                )));
            }
            for (node, &label) in labels.iter().enumerate() {
                if label >= num_classes {
                    return Err(Error::LabelOutOfRange {
                        node,
                        label,
                        num_classes,
                    });
                }
            }
        }
        Ok(Self {
            num_nodes,
            num_classes,
            hyperedges,
            features,
            labels,
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.num_nodes
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_hyperedges(&self) -> usize {
        self.hyperedges.len()
    }

    pub fn hyperedges(&self) -> &[Vec<usize>] {
        &self.hyperedges
    }

    pub fn hyperedge(&self, e: usize) -> Result<&[usize]> {
        self.hyperedges
            .get(e)
            .map(Vec::as_slice)
            .ok_or(Error::Index {
                index: e,
                len: self.hyperedges.len(),
            })
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn labels(&self) -> Option<&[usize]> {
        self.labels.as_deref()
    }

    pub fn incidence(&self) -> Incidence {
        Incidence::new(self.num_nodes, self.hyperedges.clone())
    }

    fn check_node(&self, v: usize) -> Result<()> {
        if v < self.num_nodes {
            Ok(())
        } else {
            Err(Error::Index {
                index: v,
                len: self.num_nodes,
            })
        }
    }

    /// Indices of the hyperedges containing `v`, ascending.
    pub fn egonet(&self, v: usize) -> Result<Vec<usize>> {
        self.check_node(v)?;
        Ok(self
            .hyperedges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.contains(&v))
            .map(|(j, _)| j)
            .collect())
    }

    /// Egonets of every node in one pass; each list is ascending.
    pub fn egonets(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_nodes];
        for (j, e) in self.hyperedges.iter().enumerate() {
            for &v in e {
                out[v].push(j);
            }
        }
        out
    }

    pub fn homogeneity(&self, e: usize) -> Result<f64> {
        self.hyperedge(e)?;
        Ok(homogeneity_with(&self.hyperedges[e], &self.egonets()))
    }

    /// Overlapness of the egonet of `v`; undefined for isolated nodes.
    pub fn overlapness(&self, v: usize) -> Result<f64> {
        let ego = self.egonet(v)?;
        overlapness_with(&self.hyperedges, &ego).ok_or(Error::UndefinedOverlapness(v))
    }

    pub fn mask_probabilities(&self, p_node: f64, p_tau: f64) -> Result<Vec<f64>> {
        let egonets = self.egonets();
        let log_o = log_overlapness(&self.hyperedges, &egonets);
        masking_from_log_overlapness(&log_o, p_node, p_tau).map(|(p, _, _)| p)
    }

    pub fn structural_stats(&self, p_node: f64, p_tau: f64) -> Result<StructuralStats> {
        let egonets = self.egonets();
        let homogeneity = self
            .hyperedges
            .iter()
            .map(|e| homogeneity_with(e, &egonets))
            .collect();
        let overlapness: Vec<f64> = egonets
            .iter()
            .map(|ego| overlapness_with(&self.hyperedges, ego).unwrap_or(1.0))
            .collect();
        let log_overlapness: Vec<f64> = overlapness.iter().map(|&o| libm::log(o)).collect();
        let (mask_prob, w_nmax, w_navg) =
            masking_from_log_overlapness(&log_overlapness, p_node, p_tau)?;
        Ok(StructuralStats {
            egonets,
            homogeneity,
            overlapness,
            log_overlapness,
            w_nmax,
            w_navg,
            mask_prob,
        })
    }
}

/// Number of shared entries of two ascending lists.
fn sorted_intersection_len(a: &[usize], b: &[usize]) -> usize {
    let (mut i, mut j, mut n) = (0, 0, 0);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                n += 1;
                i += 1;
                j += 1;
            }
        }
    }
    n
}

fn homogeneity_with(e: &[usize], egonets: &[Vec<usize>]) -> f64 {
    if e.len() <= 1 {
        return 1.0;
    }
    let mut total = 0usize;
    for (a, &u) in e.iter().enumerate() {
        for &w in &e[a + 1..] {
            total += sorted_intersection_len(&egonets[u], &egonets[w]);
        }
    }
    let pairs = e.len() * (e.len() - 1) / 2;
    sigmoid(total as f64 / pairs as f64)
}

fn overlapness_with(hyperedges: &[Vec<usize>], ego: &[usize]) -> Option<f64> {
    if ego.is_empty() {
        return None;
    }
    let total: usize = ego.iter().map(|&j| hyperedges[j].len()).sum();
    let distinct: BTreeSet<usize> = ego.iter().flat_map(|&j| hyperedges[j].iter().copied()).collect();
    Some(total as f64 / distinct.len() as f64)
}

/// `ln o(v)` per node, 0 for isolated nodes.
fn log_overlapness(hyperedges: &[Vec<usize>], egonets: &[Vec<usize>]) -> Vec<f64> {
    egonets
        .iter()
        .map(|ego| overlapness_with(hyperedges, ego).map_or(0.0, libm::log))
        .collect()
}

/// Masking probability per node from log-overlapness; also returns
/// (w_nmax, w_navg).
pub fn masking_from_log_overlapness(
    w: &[f64],
    p_node: f64,
    p_tau: f64,
) -> Result<(Vec<f64>, f64, f64)> {
    for (name, p) in [("p_node", p_node), ("p_tau", p_tau)] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::Parameter(format!("{name} must lie in [0, 1], got {p}")));
        }
    }
    if w.is_empty() {
        return Ok((Vec::new(), 0.0, 0.0));
    }
    let w_max = w.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let w_avg = w.iter().sum::<f64>() / w.len() as f64;
    let spread = w_max - w_avg;
    let probs = if spread <= 1e-12 * w_max.abs().max(1.0) {
        vec![p_node.min(p_tau); w.len()]
    } else {
        w.iter()
            .map(|&wv| ((w_max - wv) / spread * p_node).min(p_tau).max(0.0))
            .collect()
    };
    Ok((probs, w_max, w_avg))
}

/// Derived per-node and per-hyperedge structure of a hypergraph.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuralStats {
    pub egonets: Vec<Vec<usize>>,
    pub homogeneity: Vec<f64>,
    pub overlapness: Vec<f64>,
    pub log_overlapness: Vec<f64>,
    pub w_nmax: f64,
    pub w_navg: f64,
    pub mask_prob: Vec<f64>,
}

/// Train/test partition of the nodes for one fold.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_ids: Vec<usize>,
    pub test_ids: Vec<usize>,
    pub fold_index: usize,
    pub num_folds: usize,
}

impl SplitSpec {
    pub fn validate(&self, num_nodes: usize) -> Result<()> {
        let train: BTreeSet<usize> = self.train_ids.iter().copied().collect();
        if train.len() != self.train_ids.len() {
            return Err(Error::Split("duplicate train id".into()));
        }
        let mut test = BTreeSet::new();
        for &v in &self.test_ids {
            if !test.insert(v) {
                return Err(Error::Split(format!("duplicate test id {v}")));
            }
            if train.contains(&v) {
                return Err(Error::Split(format!("node {v} is in both train and test")));
            }
        }
        if let Some(&v) = train.iter().chain(test.iter()).find(|&&v| v >= num_nodes) {
            return Err(Error::Split(format!("node id {v} out of range {num_nodes}")));
        }
        Ok(())
    }
}
