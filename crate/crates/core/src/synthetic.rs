//! Small generated hypergraphs for tests, examples and smoke runs.

use alloc::vec;
use alloc::vec::Vec;

use crate::hypergraph::{Hypergraph, SplitSpec};
use crate::rng::RngState;
use crate::tensor::Matrix;

/// Toy instance used by tests and the acceptance suite: 8 nodes,
/// 4 hyperedges, 5 features, 2 classes.
pub fn toy_instance(seed: u64) -> (Hypergraph, SplitSpec) {
    let mut rng = RngState::new(seed);
    let labels = vec![0, 0, 0, 0, 1, 1, 1, 1];
    let mut x = Vec::with_capacity(40);
    for &y in &labels {
        for f in 0..5 {
            let signal = if (f % 2 == 0) == (y == 0) { 1.0 } else { 0.0 };
            x.push(signal + 0.3 * rng.normal());
        }
    }
    let edges = vec![vec![0, 1, 2], vec![2, 3, 4], vec![4, 5, 6], vec![6, 7, 0]];
    let h = Hypergraph::new(8, 2, edges, Matrix::new(8, 5, x), Some(labels)).expect("valid toy hypergraph");
    let split = SplitSpec {
        train_ids: vec![0, 1, 4, 5],
        test_ids: vec![2, 3, 6, 7],
        fold_index: 0,
        num_folds: 1,
    };
    (h, split)
}

/// Two linearly separable classes of 20 nodes each. Features are the
/// class mean `±1` on every coordinate plus Gaussian noise of scale 0.5;
/// eight hyperedges of five nodes each never mix classes. Half of every
/// class is used for training.
pub fn separable_instance(seed: u64) -> (Hypergraph, SplitSpec) {
    const N: usize = 40;
    const F: usize = 6;
    let mut rng = RngState::new(seed);
    let labels: Vec<usize> = (0..N).map(|v| v % 2).collect();
    let mut x = Vec::with_capacity(N * F);
    for &y in &labels {
        let mean = if y == 0 { 1.0 } else { -1.0 };
        for _ in 0..F {
            x.push(mean + 0.5 * rng.normal());
        }
    }
    let mut edges = Vec::new();
    for class in 0..2 {
        let mut members: Vec<usize> = (0..N).filter(|v| labels[*v] == class).collect();
        rng.shuffle(&mut members);
        for chunk in members.chunks(5) {
            let mut e = chunk.to_vec();
            e.sort_unstable();
            edges.push(e);
        }
    }
    let h = Hypergraph::new(N, 2, edges, Matrix::new(N, F, x), Some(labels.clone())).expect("valid separable hypergraph");
    let mut train = Vec::new();
    let mut test = Vec::new();
    for class in 0..2 {
        let mut members: Vec<usize> = (0..N).filter(|v| labels[*v] == class).collect();
        rng.shuffle(&mut members);
        train.extend_from_slice(&members[..members.len() / 2]);
        test.extend_from_slice(&members[members.len() / 2..]);
    }
    train.sort_unstable();
    test.sort_unstable();
    let split = SplitSpec {
        train_ids: train,
        test_ids: test,
        fold_index: 0,
        num_folds: 1,
    };
    (h, split)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn separable_instance_shape() {
        let (h, split) = separable_instance(0);
        assert_eq!(h.num_nodes(), 40);
        assert_eq!(h.num_hyperedges(), 8);
        let labels = h.labels().unwrap();
        for e in h.hyperedges() {
            assert!(e.iter().all(|&v| labels[v] == labels[e[0]]));
        }
        assert_eq!(split.train_ids.len(), 20);
        split.validate(40).unwrap();
    }
}
