//! Hypergraph dataset files.
//!
//! ```json
//! {"num_nodes": 4, "num_classes": 2,
//!  "hyperedges": [[0, 1], [1, 2, 3]],
//!  "features": [[1.0, 0.0], [0.0, 1.0], [1.0, 1.0], [0.0, 0.0]],
//!  "labels": [0, 0, 1, 1],
//!  "splits": {"train": [0, 2], "test": [1, 3]}}
//! ```
//!
//! `features` may instead be sparse rows:
//! `{"dim": F, "indices": [[col, ...], ...], "values": [[v, ...], ...]}`,
//! where a missing `values` means every listed entry is 1.

use std::path::Path;

use chgnn_core::{Hypergraph, Matrix};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetFile {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub hyperedges: Vec<Vec<usize>>,
    pub features: Features,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<usize>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub splits: Option<FixedSplit>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Features {
    Dense(Vec<Vec<f64>>),
    Sparse {
        dim: usize,
        indices: Vec<Vec<usize>>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        values: Option<Vec<Vec<f64>>>,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FixedSplit {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// A validated hypergraph plus the split shipped with it, if any.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Hypergraph,
    pub split: Option<FixedSplit>,
}

impl Features {
    fn to_matrix(&self, num_nodes: usize) -> Result<Matrix> {
        match self {
            Features::Dense(rows) => {
                if rows.len() != num_nodes {
                    return Err(CliError::Data(format!(
                        "{} feature rows for {num_nodes} nodes",
                        rows.len()
                    )));
                }
                let dim = rows.first().map_or(0, Vec::len);
                if let Some(r) = rows.iter().position(|r| r.len() != dim) {
                    return Err(CliError::Data(format!(
                        "feature row {r} has {} entries, expected {dim}",
                        rows[r].len()
                    )));
                }
                Ok(Matrix::from_rows(rows))
            }
            Features::Sparse { dim, indices, values } => {
                if indices.len() != num_nodes {
                    return Err(CliError::Data(format!(
                        "{} sparse feature rows for {num_nodes} nodes",
                        indices.len()
                    )));
                }
                if let Some(values) = values {
                    if values.len() != indices.len() {
                        return Err(CliError::Data("sparse values and indices differ in row count".into()));
                    }
                }
                let mut m = Matrix::zeros(num_nodes, *dim);
                for (r, cols) in indices.iter().enumerate() {
                    let vals = values.as_ref().map(|v| &v[r]);
                    if let Some(vals) = vals {
                        if vals.len() != cols.len() {
                            return Err(CliError::Data(format!("sparse row {r}: values and indices differ in length")));
                        }
                    }
                    for (k, &c) in cols.iter().enumerate() {
                        if c >= *dim {
                            return Err(CliError::Data(format!("sparse row {r}: column {c} out of range {dim}")));
                        }
                        m.set(r, c, vals.map_or(1.0, |v| v[k]));
                    }
                }
                Ok(m)
            }
        }
    }
}

impl DatasetFile {
    pub fn from_graph(graph: &Hypergraph, split: Option<FixedSplit>) -> Self {
        let f = graph.features();
        Self {
            num_nodes: graph.num_nodes(),
            num_classes: graph.num_classes(),
            hyperedges: graph.hyperedges().to_vec(),
            features: Features::Dense((0..f.rows()).map(|r| f.row(r).to_vec()).collect()),
            labels: graph.labels().map(<[usize]>::to_vec),
            splits: split,
        }
    }

    pub fn into_dataset(self) -> Result<Dataset> {
        let features = self.features.to_matrix(self.num_nodes)?;
        let graph = Hypergraph::new(self.num_nodes, self.num_classes, self.hyperedges, features, self.labels)?;
        Ok(Dataset {
            graph,
            split: self.splits,
        })
    }
}

pub fn load_dataset(path: &Path) -> Result<Dataset> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
    let file: DatasetFile = serde_json::from_str(&text).map_err(|e| CliError::json(path, e))?;
    file.into_dataset()
}

pub fn save_dataset(path: &Path, file: &DatasetFile) -> Result<()> {
    let text = serde_json::to_string(file).map_err(|e| CliError::json(path, e))?;
    std::fs::write(path, text).map_err(|e| CliError::io(path, e))
}
