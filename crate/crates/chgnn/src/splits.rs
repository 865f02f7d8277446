//! Seeded train/test splits.

use chgnn_core::{Hypergraph, RngState, SplitSpec};

use crate::config::TrainConfig;
use crate::data::FixedSplit;
use crate::error::{CliError, Result};

const SPLIT_STREAM: u64 = 0x5911_7;

/// Builds the folds for a run.
///
/// A split shipped with the dataset yields a single fold. Otherwise
/// `label_ratio` draws an independent stratified training sample per fold,
/// and without it the shuffled nodes are cut into `folds` test blocks.
pub fn make_splits(h: &Hypergraph, cfg: &TrainConfig, fixed: Option<&FixedSplit>) -> Result<Vec<SplitSpec>> {
    let labels = h
        .labels()
        .ok_or_else(|| CliError::Data("dataset has no labels to split".into()))?;
    if let Some(fixed) = fixed {
        let split = SplitSpec {
            train_ids: fixed.train.clone(),
            test_ids: fixed.test.clone(),
            fold_index: 0,
            num_folds: 1,
        };
        split.validate(h.num_nodes())?;
        if split.train_ids.is_empty() || split.test_ids.is_empty() {
            return Err(chgnn_core::Error::Split("shipped split has an empty side".into()).into());
        }
        return Ok(vec![split]);
    }
    let rng = RngState::with_stream(cfg.seed, SPLIT_STREAM);
    match cfg.label_ratio {
        Some(ratio) => (0..cfg.folds)
            .map(|fold| ratio_split(labels, h.num_classes(), ratio, fold, cfg.folds, &mut rng.fork(fold as u64)))
            .collect(),
        None => kfold(h.num_nodes(), cfg.folds, &mut rng.fork(0)),
    }
}

fn kfold(n: usize, k: usize, rng: &mut RngState) -> Result<Vec<SplitSpec>> {
    if k < 2 || k > n {
        return Err(chgnn_core::Error::Split(format!("cannot cut {n} nodes into {k} folds")).into());
    }
    let mut order: Vec<usize> = (0..n).collect();
    rng.shuffle(&mut order);
    Ok((0..k)
        .map(|fold| {
            let (lo, hi) = (fold * n / k, (fold + 1) * n / k);
            let mut test_ids = order[lo..hi].to_vec();
            let mut train_ids: Vec<usize> = order[..lo].iter().chain(&order[hi..]).copied().collect();
            test_ids.sort_unstable();
            train_ids.sort_unstable();
            SplitSpec {
                train_ids,
                test_ids,
                fold_index: fold,
                num_folds: k,
            }
        })
        .collect())
}

/// Per-class training counts summing to `total`, proportional by largest
/// remainder, with every non-empty class getting at least one node.
pub fn stratified_counts(class_sizes: &[usize], total: usize) -> Vec<usize> {
    let n: usize = class_sizes.iter().sum();
    if n == 0 {
        return vec![0; class_sizes.len()];
    }
    let mut counts: Vec<usize> = class_sizes.iter().map(|&s| s * total / n).collect();
    let mut order: Vec<usize> = (0..class_sizes.len()).collect();
    // Remainders compared exactly as (s * total) mod n.
    order.sort_by_key(|&c| (std::cmp::Reverse((class_sizes[c] * total) % n), c));
    let mut left = total - counts.iter().sum::<usize>();
    for &c in order.iter().cycle().take(order.len() * 2) {
        if left == 0 {
            break;
        }
        if counts[c] < class_sizes[c] {
            counts[c] += 1;
            left -= 1;
        }
    }
    for c in 0..counts.len() {
        if class_sizes[c] > 0 && counts[c] == 0 {
            counts[c] = 1;
            let donor = (0..counts.len()).filter(|&d| counts[d] > 1).max_by_key(|&d| (counts[d], std::cmp::Reverse(d)));
            if let Some(d) = donor {
                counts[d] -= 1;
            }
        }
    }
    counts
}

fn ratio_split(
    labels: &[usize],
    num_classes: usize,
    ratio: f64,
    fold: usize,
    num_folds: usize,
    rng: &mut RngState,
) -> Result<SplitSpec> {
    let n = labels.len();
    let total = (ratio * n as f64).floor() as usize;
    if total == 0 {
        return Err(chgnn_core::Error::Split(format!("label_ratio {ratio} leaves no training nodes out of {n}")).into());
    }
    let mut by_class = vec![Vec::new(); num_classes];
    for (v, &y) in labels.iter().enumerate() {
        by_class[y].push(v);
    }
    let sizes: Vec<usize> = by_class.iter().map(Vec::len).collect();
    let counts = stratified_counts(&sizes, total);
    let mut train_ids = Vec::with_capacity(total);
    for (members, &k) in by_class.iter_mut().zip(&counts) {
        rng.shuffle(members);
        train_ids.extend_from_slice(&members[..k]);
    }
    train_ids.sort_unstable();
    let mut in_train = vec![false; n];
    for &v in &train_ids {
        in_train[v] = true;
    }
    let test_ids: Vec<usize> = (0..n).filter(|&v| !in_train[v]).collect();
    if test_ids.is_empty() {
        return Err(chgnn_core::Error::Split(format!("label_ratio {ratio} leaves no test nodes")).into());
    }
    Ok(SplitSpec {
        train_ids,
        test_ids,
        fold_index: fold,
        num_folds,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn largest_remainder_counts() {
        assert_eq!(stratified_counts(&[5, 5], 5), vec![3, 2]);
        assert_eq!(stratified_counts(&[10, 3, 1], 2), vec![1, 1, 1]);
        assert_eq!(stratified_counts(&[6, 3, 1], 5), vec![2, 2, 1]);
        assert_eq!(stratified_counts(&[0, 4], 2), vec![0, 2]);
    }
}
