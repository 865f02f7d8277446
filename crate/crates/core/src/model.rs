//! Model state, the training step and inference.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::encoder::{
    align_clusters, class_members, classify, encode, project, regress_homogeneity, EncoderParams,
    HeadsParams, Projection,
};
use crate::error::{Error, Result};
use crate::gradcheck::{compare, numeric_gradient, GradCheckReport};
use crate::hypergraph::{Hypergraph, SplitSpec, StructuralStats};
use crate::losses::{
    adapt_temperatures, classification_loss, cluster_contrastive_loss, homogeneity_loss,
    hyperedge_cluster_loss, hyperedge_contrastive_loss, node_cluster_loss, node_hyperedge_loss,
    total_loss, AdaptInputs, LossComponents, LossReport, LossWeights, TemperatureConfig,
    TemperatureState,
};
use crate::optim::Adam;
use crate::params::{Bound, ParamStore};
use crate::rng::RngState;
use crate::sparse::{CsrMatrix, Incidence};
use crate::tensor::{Matrix, Tape, Var};
use crate::viewgen::{plan_view, realize_view, similarity_loss, ViewGenerator, ViewPlan};

/// Architecture and objective settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub nhid: usize,
    pub nproj: usize,
    /// Hidden width of the classifier and homogeneity regressor.
    pub mlp_hidden: usize,
    pub p_node: f64,
    pub p_tau: f64,
    pub gumbel_temperature: f64,
    pub hard_sampling: bool,
    pub weights: LossWeights,
    pub temperatures: TemperatureConfig,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self {
            nhid: 64,
            nproj: 16,
            mlp_hidden: 16,
            p_node: 0.2,
            p_tau: 0.8,
            gumbel_temperature: 1.0,
            hard_sampling: true,
            weights: LossWeights::default(),
            temperatures: TemperatureConfig::default(),
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("nhid", self.nhid), ("nproj", self.nproj), ("mlp_hidden", self.mlp_hidden)] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be at least 1")));
            }
        }
        for (name, v) in [("p_node", self.p_node), ("p_tau", self.p_tau)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {v}")));
            }
        }
        if !(self.gumbel_temperature > 0.0) || !self.gumbel_temperature.is_finite() {
            return Err(Error::Config(format!(
                "gumbel_temperature must be positive, got {}",
                self.gumbel_temperature
            )));
        }
        self.weights.validate()?;
        self.temperatures.validate()
    }
}

/// Optimiser settings of one run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimConfig {
    pub epochs: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub seed: u64,
}

impl Default for OptimConfig {
    fn default() -> Self {
        Self {
            epochs: 300,
            lr: 0.01,
            weight_decay: 5e-4,
            seed: 0,
        }
    }
}

impl OptimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("epochs must be at least 1".into()));
        }
        if !(self.lr > 0.0) || !self.lr.is_finite() {
            return Err(Error::Config(format!("lr must be positive, got {}", self.lr)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Layout {
    generators: [ViewGenerator; 2],
    encoder: EncoderParams,
    heads: HeadsParams,
}

impl Layout {
    fn build(
        params: &mut ParamStore,
        config: &ModelConfig,
        num_features: usize,
        num_classes: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        let t = config.gumbel_temperature;
        let g1 = ViewGenerator::new(params, "generator1", num_features, config.nhid, t, rng)?;
        let g2 = ViewGenerator::new(params, "generator2", num_features, config.nhid, t, rng)?;
        let encoder = EncoderParams::new(params, num_features, config.nhid, rng)?;
        let heads = HeadsParams::new(params, config.nhid, config.nproj, config.mlp_hidden, num_classes, rng)?;
        Ok(Self {
            generators: [g1, g2],
            encoder,
            heads,
        })
    }
}

/// All learnable parameters plus the configuration that shaped them.
#[derive(Debug, Clone)]
pub struct ModelState {
    pub config: ModelConfig,
    pub num_features: usize,
    pub num_classes: usize,
    pub params: ParamStore,
    layout: Layout,
}

impl ModelState {
    pub fn new(config: ModelConfig, num_features: usize, num_classes: usize, seed: u64) -> Result<Self> {
        config.validate()?;
        if num_features == 0 || num_classes == 0 {
            return Err(Error::Config("model needs at least one feature and one class".into()));
        }
        let mut params = ParamStore::new();
        let mut rng = RngState::new(seed);
        let layout = Layout::build(&mut params, &config, num_features, num_classes, &mut rng)?;
        Ok(Self {
            config,
            num_features,
            num_classes,
            params,
            layout,
        })
    }

    /// Rebuilds a model around saved parameter values.
    pub fn from_params(config: ModelConfig, num_features: usize, num_classes: usize, saved: &ParamStore) -> Result<Self> {
        let mut state = Self::new(config, num_features, num_classes, 0)?;
        state.params.load_from(saved)?;
        Ok(state)
    }

    pub fn num_parameters(&self) -> usize {
        self.params.num_scalars()
    }

    fn check_graph(&self, h: &Hypergraph) -> Result<()> {
        if h.feature_dim() != self.num_features || h.num_classes() != self.num_classes {
            return Err(Error::Config(format!(
                "model built for {} features and {} classes, data has {} and {}",
                self.num_features,
                self.num_classes,
                h.feature_dim(),
                h.num_classes()
            )));
        }
        Ok(())
    }
}

/// Precomputed structure of the base hypergraph.
#[derive(Debug, Clone)]
pub struct GraphContext<'a> {
    pub graph: &'a Hypergraph,
    pub stats: StructuralStats,
    pub features: Arc<CsrMatrix>,
    pub incidence: Arc<Incidence>,
}

impl<'a> GraphContext<'a> {
    pub fn new(graph: &'a Hypergraph, p_node: f64, p_tau: f64) -> Result<Self> {
        let f = graph.features();
        Ok(Self {
            graph,
            stats: graph.structural_stats(p_node, p_tau)?,
            features: Arc::new(CsrMatrix::from_dense(f.rows(), f.cols(), f.data())),
            incidence: Arc::new(graph.incidence()),
        })
    }
}

/// Labeled training nodes of one run.
#[derive(Debug, Clone)]
struct Supervision {
    train_ids: Vec<usize>,
    classes: Vec<Vec<usize>>,
}

impl Supervision {
    fn new(h: &Hypergraph, split: &SplitSpec) -> Result<Self> {
        split.validate(h.num_nodes())?;
        let labels = h
            .labels()
            .ok_or_else(|| Error::Validation("training needs labels".into()))?;
        if split.train_ids.is_empty() {
            return Err(Error::Split("empty training set".into()));
        }
        Ok(Self {
            train_ids: split.train_ids.clone(),
            classes: class_members(labels, &split.train_ids, h.num_classes()),
        })
    }
}

enum Temps<'t> {
    Adapt(&'t mut TemperatureState, usize),
    Fixed(&'t TemperatureState),
}

struct Forward {
    loss: Var,
    report: LossReport,
    warnings: Vec<String>,
}

fn generator_logits(tape: &mut Tape, bound: &Bound, layout: &Layout, ctx: &GraphContext<'_>) -> Result<[Var; 2]> {
    let a = layout.generators[0].logits(tape, bound, &ctx.features, &ctx.incidence)?;
    let b = layout.generators[1].logits(tape, bound, &ctx.features, &ctx.incidence)?;
    Ok([a, b])
}

/// Positions of the hyperedges present in both id lists (both sorted).
fn shared_positions(a: &[usize], b: &[usize]) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
    let (mut i, mut j) = (0, 0);
    let (mut ids, mut pa, mut pb) = (Vec::new(), Vec::new(), Vec::new());
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            core::cmp::Ordering::Less => i += 1,
            core::cmp::Ordering::Greater => j += 1,
            core::cmp::Ordering::Equal => {
                ids.push(a[i]);
                pa.push(i);
                pb.push(j);
                i += 1;
                j += 1;
            }
        }
    }
    (ids, pa, pb)
}

#[allow(clippy::too_many_arguments)]
fn forward(
    tape: &mut Tape,
    bound: &Bound,
    state: &ModelState,
    ctx: &GraphContext<'_>,
    sup: &Supervision,
    logits: [Var; 2],
    plans: &[ViewPlan; 2],
    temps: Temps<'_>,
    hard: bool,
    epoch: usize,
) -> Result<Forward> {
    let cfg = &state.config;
    let heads = &state.layout.heads;
    let h = ctx.graph;
    let mut warnings = Vec::new();

    let v1 = realize_view(tape, h, logits[0], &plans[0], cfg.gumbel_temperature, hard)?;
    let v2 = realize_view(tape, h, logits[1], &plans[1], cfg.gumbel_temperature, hard)?;
    let sim = similarity_loss(tape, &v1.aug, &v2.aug)?;

    let mut incs = Vec::with_capacity(2);
    let mut embs = Vec::with_capacity(2);
    let mut homo_targets: Vec<Vec<f64>> = Vec::with_capacity(2);
    let mut ids: Vec<Vec<usize>> = Vec::with_capacity(2);
    for view in [&v1, &v2] {
        let orig = view.original_ids();
        let target: Vec<f64> = orig.iter().map(|&j| ctx.stats.homogeneity[j]).collect();
        let inc = Arc::new(view.incidence());
        let keep = view.keep_weights(tape);
        let homo = tape.constant(Matrix::new(target.len(), 1, target.clone()));
        let weights = tape.mul(keep, homo);
        embs.push(encode(tape, bound, &state.layout.encoder, &ctx.features, &inc, weights)?);
        incs.push(inc);
        homo_targets.push(target);
        ids.push(orig);
    }

    let probs = classify(tape, bound, heads, embs[0].nodes, embs[1].nodes);
    let cls = classification_loss(tape, probs, h.labels(), &sup.train_ids)?;
    let preds = [
        regress_homogeneity(tape, bound, heads, embs[0].hyperedges),
        regress_homogeneity(tape, bound, heads, embs[1].hyperedges),
    ];
    let hom = homogeneity_loss(tape, preds, [&homo_targets[0], &homo_targets[1]], cfg.weights.lambda_h)?;

    let mut zc = [embs[0].nodes; 2];
    let mut zv = [embs[0].nodes; 2];
    let mut ze = [embs[0].nodes; 2];
    let mut za = [embs[0].nodes; 2];
    for g in 0..2 {
        zc[g] = project(tape, bound, heads, embs[g].nodes, Projection::Cluster);
        zv[g] = project(tape, bound, heads, embs[g].nodes, Projection::Node);
        ze[g] = project(tape, bound, heads, embs[g].hyperedges, Projection::Hyperedge);
        za[g] = align_clusters(tape, bound, heads, zc[g]);
    }
    let (shared, p1, p2) = shared_positions(&ids[0], &ids[1]);
    if shared.is_empty() {
        warnings.push(format!("epoch {epoch}: the views share no hyperedge"));
    }
    let ze_shared = [tape.gather_rows(ze[0], &p1), tape.gather_rows(ze[1], &p2)];

    let temps: &TemperatureState = match temps {
        Temps::Adapt(t, k) => {
            let inputs = AdaptInputs {
                zc: [tape.value(zc[0]), tape.value(zc[1])],
                zv: [tape.value(zv[0]), tape.value(zv[1])],
                ze: [tape.value(ze_shared[0]), tape.value(ze_shared[1])],
                shared_ids: &shared,
                classes: &sup.classes,
            };
            warnings.extend(adapt_temperatures(t, &inputs, k)?);
            t
        }
        Temps::Fixed(t) => t,
    };
    let base = temps.base;
    let c = cluster_contrastive_loss(tape, zc[0], zc[1], temps.cluster_table())?;
    let e = hyperedge_contrastive_loss(tape, ze_shared[0], ze_shared[1], &temps.hyperedge_table(&shared))?;
    let nc = node_cluster_loss(tape, zv, za, base.tau_nc)?;
    let ne = node_hyperedge_loss(tape, zv, ze, [&incs[0], &incs[1]], base.tau_ne)?;
    let ec = hyperedge_cluster_loss(tape, za, ze, [&incs[0], &incs[1]], base.tau_ec)?;

    let parts = LossComponents {
        sim,
        cls,
        h: hom,
        c,
        e,
        nc,
        ne,
        ec,
    };
    let (loss, report) = total_loss(tape, &parts, &cfg.weights, epoch)?;
    Ok(Forward { loss, report, warnings })
}

/// Epoch-by-epoch optimisation of one model on one split.
pub struct Trainer<'a> {
    ctx: GraphContext<'a>,
    sup: Supervision,
    optimizer: Adam,
    temps: TemperatureState,
    rng: RngState,
    epoch: usize,
    /// Warnings raised so far, in order.
    pub warnings: Vec<String>,
}

impl<'a> Trainer<'a> {
    pub fn new(state: &ModelState, h: &'a Hypergraph, split: &SplitSpec, optim: &OptimConfig) -> Result<Self> {
        optim.validate()?;
        state.check_graph(h)?;
        Ok(Self {
            ctx: GraphContext::new(h, state.config.p_node, state.config.p_tau)?,
            sup: Supervision::new(h, split)?,
            optimizer: Adam::new(&state.params, optim.lr, optim.weight_decay),
            temps: TemperatureState::new(state.config.temperatures, state.num_classes)?,
            rng: RngState::new(optim.seed).fork(1),
            epoch: 0,
            warnings: Vec::new(),
        })
    }

    pub fn epoch(&self) -> usize {
        self.epoch
    }

    pub fn temperatures(&self) -> &TemperatureState {
        &self.temps
    }

    /// Samples two views, evaluates every loss, adapts temperatures and
    /// takes one optimiser step.
    pub fn step(&mut self, state: &mut ModelState) -> Result<LossReport> {
        let mut tape = Tape::new();
        let bound = state.params.bind(&mut tape);
        let logits = generator_logits(&mut tape, &bound, &state.layout, &self.ctx)?;
        let plans = self.plan(&tape, state, logits)?;
        let fwd = forward(
            &mut tape,
            &bound,
            state,
            &self.ctx,
            &self.sup,
            logits,
            &plans,
            Temps::Adapt(&mut self.temps, self.epoch),
            state.config.hard_sampling,
            self.epoch,
        )?;
        tape.backward(fwd.loss)?;
        let grads = bound.grads(&tape);
        self.optimizer.step(&mut state.params, &grads);
        self.warnings.extend(fwd.warnings);
        self.epoch += 1;
        Ok(fwd.report)
    }

    fn plan(&mut self, tape: &Tape, state: &ModelState, logits: [Var; 2]) -> Result<[ViewPlan; 2]> {
        let t = state.config.gumbel_temperature;
        let h = self.ctx.graph;
        let p1 = plan_view(h, &self.ctx.stats, tape.value(logits[0]), t, &mut self.rng)?;
        let p2 = plan_view(h, &self.ctx.stats, tape.value(logits[1]), t, &mut self.rng)?;
        for (g, p) in [&p1, &p2].into_iter().enumerate() {
            if p.fell_back {
                self.warnings.push(format!(
                    "epoch {}: view {} was empty twice and fell back to the full hypergraph",
                    self.epoch,
                    g + 1
                ));
            }
        }
        Ok([p1, p2])
    }
}

/// Trains for `optim.epochs` epochs and returns the per-epoch reports.
pub fn fit(state: &mut ModelState, h: &Hypergraph, split: &SplitSpec, optim: &OptimConfig) -> Result<(Vec<LossReport>, Vec<String>)> {
    let mut trainer = Trainer::new(state, h, split, optim)?;
    let mut reports = Vec::with_capacity(optim.epochs);
    for _ in 0..optim.epochs {
        reports.push(trainer.step(state)?);
    }
    Ok((reports, trainer.warnings))
}

/// Finite-difference check of the full objective with respect to every
/// parameter. The views, Gumbel noise and temperature tables are sampled
/// once and then held fixed, and the relaxed Gumbel sample replaces the
/// straight-through one so the objective is smooth in every parameter.
pub fn gradient_check(state: &ModelState, h: &Hypergraph, split: &SplitSpec, seed: u64, step: f64, floor: f64) -> Result<GradCheckReport> {
    let optim = OptimConfig {
        seed,
        ..OptimConfig::default()
    };
    let mut trainer = Trainer::new(state, h, split, &optim)?;

    let mut tape = Tape::new();
    let bound = state.params.bind(&mut tape);
    let logits = generator_logits(&mut tape, &bound, &state.layout, &trainer.ctx)?;
    let plans = trainer.plan(&tape, state, logits)?;
    let mut temps = trainer.temps.clone();
    let fwd = forward(&mut tape, &bound, state, &trainer.ctx, &trainer.sup, logits, &plans, Temps::Adapt(&mut temps, 0), false, 0)?;
    tape.backward(fwd.loss)?;
    let analytic = bound.grads(&tape);
    trainer.temps = temps;

    let mut failure = None;
    let numeric = numeric_gradient(&state.params, step, |p| {
        let mut t = Tape::new();
        let b = p.bind(&mut t);
        let run = generator_logits(&mut t, &b, &state.layout, &trainer.ctx).and_then(|lg| {
            forward(&mut t, &b, state, &trainer.ctx, &trainer.sup, lg, &plans, Temps::Fixed(&trainer.temps), false, 0)
        });
        match run {
            Ok(f) => t.scalar(f.loss),
            Err(e) => {
                failure.get_or_insert(e);
                f64::NAN
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    Ok(compare(&analytic, &numeric, floor))
}

/// Encoder outputs on the unaugmented hypergraph.
fn clean_forward(tape: &mut Tape, bound: &Bound, state: &ModelState, ctx: &GraphContext<'_>) -> Result<crate::encoder::Embeddings> {
    let homo = tape.constant(Matrix::new(
        ctx.stats.homogeneity.len(),
        1,
        ctx.stats.homogeneity.clone(),
    ));
    encode(tape, bound, &state.layout.encoder, &ctx.features, &ctx.incidence, homo)
}

/// Class probabilities `n × C` from the unaugmented hypergraph, fed as both
/// views.
pub fn predict(state: &ModelState, h: &Hypergraph) -> Result<Matrix> {
    state.check_graph(h)?;
    let ctx = GraphContext::new(h, state.config.p_node, state.config.p_tau)?;
    let mut tape = Tape::new();
    let bound = state.params.bind(&mut tape);
    let emb = clean_forward(&mut tape, &bound, state, &ctx)?;
    let probs = classify(&mut tape, &bound, &state.layout.heads, emb.nodes, emb.nodes);
    Ok(tape.value(probs).clone())
}

/// Final node embeddings `n × nhid` of the unaugmented hypergraph.
pub fn node_embeddings(state: &ModelState, h: &Hypergraph) -> Result<Matrix> {
    state.check_graph(h)?;
    let ctx = GraphContext::new(h, state.config.p_node, state.config.p_tau)?;
    let mut tape = Tape::new();
    let bound = state.params.bind(&mut tape);
    let emb = clean_forward(&mut tape, &bound, state, &ctx)?;
    Ok(tape.value(emb.nodes).clone())
}

/// Fraction of `ids` whose row argmax equals the label.
pub fn accuracy(probs: &Matrix, labels: &[usize], ids: &[usize]) -> Result<f64> {
    if ids.is_empty() {
        return Err(Error::Split("empty test set".into()));
    }
    let pred = probs.argmax_rows();
    let mut correct = 0usize;
    for &v in ids {
        if v >= pred.len() || v >= labels.len() {
            return Err(Error::Index { index: v, len: pred.len() });
        }
        if pred[v] == labels[v] {
            correct += 1;
        }
    }
    Ok(correct as f64 / ids.len() as f64)
}

/// Test accuracy of a trained model on `split`.
pub fn evaluate(state: &ModelState, h: &Hypergraph, split: &SplitSpec) -> Result<f64> {
    split.validate(h.num_nodes())?;
    let labels = h
        .labels()
        .ok_or_else(|| Error::Validation("evaluation needs labels".into()))?;
    let probs = predict(state, h)?;
    accuracy(&probs, labels, &split.test_ids)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synthetic::toy_instance;
    use alloc::vec;

    fn small_config() -> ModelConfig {
        ModelConfig {
            nhid: 6,
            nproj: 4,
            mlp_hidden: 5,
            ..ModelConfig::default()
        }
    }

    #[test]
    fn shared_positions_intersects() {
        let (ids, a, b) = shared_positions(&[0, 2, 3, 7], &[1, 2, 7]);
        assert_eq!(ids, vec![2, 7]);
        assert_eq!(a, vec![1, 3]);
        assert_eq!(b, vec![1, 2]);
    }

    #[test]
    fn config_validation() {
        assert!(ModelConfig::default().validate().is_ok());
        let bad = ModelConfig {
            p_node: 1.5,
            ..ModelConfig::default()
        };
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = OptimConfig {
            epochs: 0,
            ..OptimConfig::default()
        };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn parameter_count_is_stable() {
        let (h, split) = toy_instance(1);
        let mut state = ModelState::new(small_config(), 5, 2, 3).unwrap();
        let before = state.num_parameters();
        let optim = OptimConfig {
            epochs: 3,
            ..OptimConfig::default()
        };
        fit(&mut state, &h, &split, &optim).unwrap();
        assert_eq!(state.num_parameters(), before);
    }

    #[test]
    fn reports_recompose() {
        let (h, split) = toy_instance(2);
        let mut state = ModelState::new(small_config(), 5, 2, 4).unwrap();
        let optim = OptimConfig {
            epochs: 2,
            ..OptimConfig::default()
        };
        let (reports, _) = fit(&mut state, &h, &split, &optim).unwrap();
        for r in &reports {
            assert!((r.recompose(&state.config.weights) - r.total).abs() < 1e-9);
        }
    }

    #[test]
    fn accuracy_counts_matches() {
        let probs = Matrix::from_rows(&[vec![0.9, 0.1], vec![0.2, 0.8], vec![0.6, 0.4]]);
        assert_eq!(accuracy(&probs, &[0, 1, 1], &[0, 1, 2]).unwrap(), 2.0 / 3.0);
        assert!(accuracy(&probs, &[0, 1, 1], &[]).is_err());
    }

    #[test]
    fn mismatched_data_is_rejected() {
        let (h, _) = toy_instance(0);
        let state = ModelState::new(small_config(), 4, 2, 0).unwrap();
        assert!(matches!(predict(&state, &h), Err(Error::Config(_))));
    }
}
