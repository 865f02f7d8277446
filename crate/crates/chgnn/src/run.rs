//! Training runs and their artifacts.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use chgnn_core::model::{evaluate, fit, node_embeddings};
use chgnn_core::{Hypergraph, LossReport, ModelState, SplitSpec};
use serde::{Deserialize, Serialize};

use crate::checkpoint;
use crate::config::TrainConfig;
use crate::data::Dataset;
use crate::error::{CliError, Result};
use crate::splits::make_splits;

pub const METRICS_FILE: &str = "metrics.json";
pub const LOSSES_FILE: &str = "losses.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.bin";
pub const EMBEDDINGS_FILE: &str = "embeddings.tsv";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    pub std_accuracy: f64,
    /// Per-fold, per-epoch loss terms.
    pub losses: Vec<Vec<LossReport>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub wall_clock_seconds: Option<f64>,
}

impl Metrics {
    pub fn new(fold_accuracies: Vec<f64>, losses: Vec<Vec<LossReport>>) -> Self {
        let k = fold_accuracies.len().max(1) as f64;
        let mean = fold_accuracies.iter().sum::<f64>() / k;
        let var = fold_accuracies.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / k;
        Self {
            fold_accuracies,
            mean_accuracy: mean,
            std_accuracy: var.sqrt(),
            losses,
            wall_clock_seconds: None,
        }
    }
}

/// Outcome of training on one split.
#[derive(Debug, Clone)]
pub struct FoldResult {
    pub state: ModelState,
    pub split: SplitSpec,
    pub accuracy: f64,
    pub losses: Vec<LossReport>,
}

/// Model seed of fold `k`, so folds differ but each is reproducible.
fn fold_seed(seed: u64, fold: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(fold as u64)
}

pub fn train_fold(h: &Hypergraph, split: &SplitSpec, cfg: &TrainConfig) -> Result<FoldResult> {
    let seed = fold_seed(cfg.seed, split.fold_index);
    let mut state = ModelState::new(cfg.model(), h.feature_dim(), h.num_classes(), seed)?;
    let (losses, warnings) = fit(&mut state, h, split, &cfg.optim(seed))?;
    for w in warnings {
        log::warn!("fold {}: {w}", split.fold_index);
    }
    let accuracy = evaluate(&state, h, split)?;
    log::info!(
        "fold {}/{}: test accuracy {accuracy:.4}",
        split.fold_index + 1,
        split.num_folds
    );
    Ok(FoldResult {
        state,
        split: split.clone(),
        accuracy,
        losses,
    })
}

/// Trains on `splits`, timing the whole run unless determinism is on.
pub fn run_folds(h: &Hypergraph, splits: &[SplitSpec], cfg: &TrainConfig) -> Result<(Metrics, Vec<FoldResult>)> {
    let start = Instant::now();
    let results = splits
        .iter()
        .map(|s| train_fold(h, s, cfg))
        .collect::<Result<Vec<_>>>()?;
    let mut metrics = Metrics::new(
        results.iter().map(|r| r.accuracy).collect(),
        results.iter().map(|r| r.losses.clone()).collect(),
    );
    if !cfg.deterministic {
        metrics.wall_clock_seconds = Some(start.elapsed().as_secs_f64());
    }
    Ok((metrics, results))
}

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write(path: PathBuf, text: String) -> Result<()> {
    std::fs::write(&path, text).map_err(|e| CliError::io(&path, e))
}

pub fn write_metrics(dir: &Path, metrics: &Metrics) -> Result<()> {
    let path = dir.join(METRICS_FILE);
    let text = serde_json::to_string_pretty(metrics).map_err(|e| CliError::json(&path, e))?;
    write(path, text)
}

/// One JSON object per epoch with a leading `fold` key.
pub fn write_losses(dir: &Path, metrics: &Metrics) -> Result<()> {
    #[derive(Serialize)]
    struct Row<'a> {
        fold: usize,
        #[serde(flatten)]
        report: &'a LossReport,
    }
    let path = dir.join(LOSSES_FILE);
    let mut text = String::new();
    for (fold, series) in metrics.losses.iter().enumerate() {
        for report in series {
            let line = serde_json::to_string(&Row { fold, report }).map_err(|e| CliError::json(&path, e))?;
            text.push_str(&line);
            text.push('\n');
        }
    }
    write(path, text)
}

/// Node id followed by the embedding values, tab separated.
pub fn write_embeddings(dir: &Path, state: &ModelState, h: &Hypergraph) -> Result<()> {
    let emb = node_embeddings(state, h)?;
    let mut text = String::new();
    for v in 0..emb.rows() {
        write!(text, "{v}").unwrap();
        for x in emb.row(v) {
            write!(text, "\t{x}").unwrap();
        }
        text.push('\n');
    }
    write(dir.join(EMBEDDINGS_FILE), text)
}

/// Trains on the first split and writes every artifact to `out`.
pub fn train_command(data: &Dataset, cfg: &TrainConfig, out: &Path) -> Result<Metrics> {
    let splits = make_splits(&data.graph, cfg, data.split.as_ref())?;
    let (metrics, results) = run_folds(&data.graph, &splits[..1], cfg)?;
    create_dir(out)?;
    let fold = &results[0];
    write_metrics(out, &metrics)?;
    write_losses(out, &metrics)?;
    checkpoint::save(&out.join(CHECKPOINT_FILE), &fold.state, Some(&fold.split))?;
    write_embeddings(out, &fold.state, &data.graph)?;
    Ok(metrics)
}

/// Cross-validates over every split, writing metrics and loss traces.
pub fn folds_command(data: &Dataset, cfg: &TrainConfig, out: &Path) -> Result<Metrics> {
    let splits = make_splits(&data.graph, cfg, data.split.as_ref())?;
    let (metrics, _) = run_folds(&data.graph, &splits, cfg)?;
    create_dir(out)?;
    write_metrics(out, &metrics)?;
    write_losses(out, &metrics)?;
    Ok(metrics)
}

/// Test accuracy of a checkpoint. The split stored in the checkpoint wins
/// over one shipped with the data.
pub fn eval_command(ckpt: &Path, data: &Dataset) -> Result<f64> {
    let loaded = checkpoint::load(ckpt)?;
    let split = match (loaded.split, &data.split) {
        (Some(s), _) => s,
        (None, Some(f)) => SplitSpec {
            train_ids: f.train.clone(),
            test_ids: f.test.clone(),
            fold_index: 0,
            num_folds: 1,
        },
        (None, None) => return Err(CliError::Data("no test split in checkpoint or dataset".into())),
    };
    Ok(evaluate(&loaded.state, &data.graph, &split)?)
}
