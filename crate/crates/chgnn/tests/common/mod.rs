#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use chgnn::data::{save_dataset, DatasetFile, FixedSplit};
use chgnn_core::synthetic::{separable_instance, toy_instance};
use chgnn_core::{Hypergraph, Matrix, SplitSpec};

fn fixed(split: &SplitSpec) -> FixedSplit {
    FixedSplit {
        train: split.train_ids.clone(),
        test: split.test_ids.clone(),
    }
}

pub fn write_toy(dir: &Path) -> PathBuf {
    let (h, split) = toy_instance(3);
    let path = dir.join("toy.json");
    save_dataset(&path, &DatasetFile::from_graph(&h, Some(fixed(&split)))).unwrap();
    path
}

pub fn write_separable(dir: &Path, with_split: bool) -> PathBuf {
    let (h, split) = separable_instance(7);
    let path = dir.join("separable.json");
    let split = with_split.then(|| fixed(&split));
    save_dataset(&path, &DatasetFile::from_graph(&h, split)).unwrap();
    path
}

/// The nine-node example with hyperedges {v1,v2,v9}, {v3,v4}, {v4..v7},
/// {v6..v9}, shifted to 0-based ids.
pub fn figure_one() -> Hypergraph {
    let edges = vec![vec![0, 1, 8], vec![2, 3], vec![3, 4, 5, 6], vec![5, 6, 7, 8]];
    Hypergraph::new(9, 1, edges, Matrix::zeros(9, 1), None).unwrap()
}

pub fn write_config(dir: &Path, name: &str, json: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, json).unwrap();
    path
}

pub fn chgnn(args: &[&dyn AsRef<std::ffi::OsStr>]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_chgnn"));
    for a in args {
        cmd.arg(a);
    }
    cmd.output().expect("binary runs")
}
