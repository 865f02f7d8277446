use alloc::string::String;

use thiserror::Error;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty hyperedge at index {0}")]
    EmptyHyperedge(usize),
    #[error("node id out of range: hyperedge {hyperedge} references node {node} but num_nodes = {num_nodes}")]
    NodeOutOfRange {
        hyperedge: usize,
        node: usize,
        num_nodes: usize,
    },
    #[error("duplicate node {node} in hyperedge {hyperedge}")]
    DuplicateNode { hyperedge: usize, node: usize },
    #[error("invalid features: {0}")]
    Features(String),
    #[error("label {label} of node {node} outside [0, {num_classes})")]
    LabelOutOfRange {
        node: usize,
        label: usize,
        num_classes: usize,
    },
    #[error("index {index} out of range (len {len})")]
    Index { index: usize, len: usize },
    #[error("overlapness undefined for node {0}: empty egonet")]
    UndefinedOverlapness(usize),
    #[error("shape mismatch: {0}")]
    Shape(String),
    #[error("invalid parameter: {0}")]
    Parameter(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("invalid split: {0}")]
    Split(String),
    #[error("non-finite loss term {term} at epoch {epoch}")]
    NonFinite { term: &'static str, epoch: usize },
    #[error("validation error: {0}")]
    Validation(String),
    #[error("encode error: {0}")]
    Encode(String),
    #[error("diagnostic error: {0}")]
    Diagnostic(String),
    #[error("internal error: {0}")]
    Internal(String),
}
