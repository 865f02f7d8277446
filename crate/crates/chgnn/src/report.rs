//! Structural statistics report.

use std::collections::BTreeMap;
use std::path::Path;

use chgnn_core::Hypergraph;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StatsReport {
    pub num_nodes: usize,
    pub num_hyperedges: usize,
    /// One entry per hyperedge, in file order.
    pub homogeneity: Vec<f64>,
    /// One entry per node; `null` for nodes in no hyperedge.
    pub overlapness: Vec<Option<f64>>,
    pub mask_prob: Vec<f64>,
    pub w_nmax: f64,
    pub w_navg: f64,
    /// Node degree to number of nodes with that degree.
    pub degree_histogram: BTreeMap<usize, usize>,
    /// Hyperedge size to number of hyperedges of that size.
    pub size_histogram: BTreeMap<usize, usize>,
}

pub fn stats_report(h: &Hypergraph, p_node: f64, p_tau: f64) -> Result<StatsReport> {
    let stats = h.structural_stats(p_node, p_tau)?;
    let overlapness = stats
        .egonets
        .iter()
        .zip(&stats.overlapness)
        .map(|(ego, &o)| (!ego.is_empty()).then_some(o))
        .collect();
    let mut degree_histogram = BTreeMap::new();
    for ego in &stats.egonets {
        *degree_histogram.entry(ego.len()).or_insert(0) += 1;
    }
    let mut size_histogram = BTreeMap::new();
    for e in h.hyperedges() {
        *size_histogram.entry(e.len()).or_insert(0) += 1;
    }
    Ok(StatsReport {
        num_nodes: h.num_nodes(),
        num_hyperedges: h.num_hyperedges(),
        homogeneity: stats.homogeneity,
        overlapness,
        mask_prob: stats.mask_prob,
        w_nmax: stats.w_nmax,
        w_navg: stats.w_navg,
        degree_histogram,
        size_histogram,
    })
}

pub fn write_report(path: &Path, report: &StatsReport) -> Result<()> {
    let text = serde_json::to_string_pretty(report).map_err(|e| CliError::json(path, e))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}

pub fn read_report(path: &Path) -> Result<StatsReport> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| CliError::json(path, e))
}
