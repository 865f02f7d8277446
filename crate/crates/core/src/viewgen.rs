//! Adaptive hypergraph view generation.
//!
//! A generator embeds hyperedges with two HyperConv layers, predicts a
//! (preserve, remove, mask) distribution per hyperedge and samples one
//! operation per hyperedge with straight-through Gumbel-softmax. Masking
//! drops individual members of a hyperedge with the overlapness-based
//! probabilities of [`StructuralStats::mask_prob`].
//!
//! Sampling is split in two: [`plan_view`] makes every random decision
//! from plain values, and [`realize_view`] replays a plan on a tape. The
//! replay is what makes a fixed-noise gradient check possible.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::hypergraph::{Hypergraph, StructuralStats};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::RngState;
use crate::sparse::{CsrMatrix, Incidence};
use crate::tensor::{one_hot_rows, Matrix, Tape, Var};

pub const NUM_OPS: usize = 3;

/// Column order of augmentation probabilities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum AugOp {
    Preserve = 0,
    Remove = 1,
    Mask = 2,
}

impl AugOp {
    pub fn from_index(i: usize) -> Self {
        match i {
            0 => AugOp::Preserve,
            1 => AugOp::Remove,
            _ => AugOp::Mask,
        }
    }
}

/// Learnable view generator.
#[derive(Debug, Clone)]
pub struct ViewGenerator {
    layers: [(ParamId, ParamId); 2],
    head: (ParamId, ParamId),
    pub temperature: f64,
    in_dim: usize,
}

impl ViewGenerator {
    pub fn new(
        params: &mut ParamStore,
        prefix: &str,
        in_dim: usize,
        nhid: usize,
        temperature: f64,
        rng: &mut RngState,
    ) -> Result<Self> {
        let w1 = params.glorot(&format!("{prefix}.conv1.weight"), in_dim, nhid, rng)?;
        let b1 = params.zeros(&format!("{prefix}.conv1.bias"), 1, nhid);
        let w2 = params.glorot(&format!("{prefix}.conv2.weight"), nhid, nhid, rng)?;
        let b2 = params.zeros(&format!("{prefix}.conv2.bias"), 1, nhid);
        let hw = params.glorot(&format!("{prefix}.head.weight"), nhid, NUM_OPS, rng)?;
        let hb = params.zeros(&format!("{prefix}.head.bias"), 1, NUM_OPS);
        Ok(Self {
            layers: [(w1, b1), (w2, b2)],
            head: (hw, hb),
            temperature,
            in_dim,
        })
    }

    pub fn head_ids(&self) -> (ParamId, ParamId) {
        self.head
    }

    /// Hyperedge embedding matrix `|E| × nhid`.
    pub fn hyperconv_embed(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        features: &Arc<CsrMatrix>,
        inc: &Arc<Incidence>,
    ) -> Result<Var> {
        if features.cols() != self.in_dim {
            return Err(Error::Config(format!(
                "generator expects {} feature columns, got {}",
                self.in_dim,
                features.cols()
            )));
        }
        if features.rows() != inc.num_nodes() {
            return Err(Error::Config("feature rows differ from node count".into()));
        }
        let inv_degree = node_inverse_degree(tape, inc);
        let ones = tape.constant(Matrix::filled(inc.num_edges(), 1, 1.0));

        let (w1, b1) = self.layers[0];
        let z = tape.sp_matmul(features, bound.var(w1));
        let mut h = hyperconv(tape, z, inc, ones, inv_degree, bound.var(b1));
        let (w2, b2) = self.layers[1];
        let z = tape.matmul(h, bound.var(w2));
        h = hyperconv(tape, z, inc, ones, inv_degree, bound.var(b2));
        Ok(tape.segment_mean(h, inc))
    }

    /// Operation logits `|E| × 3` from hyperedge embeddings.
    pub fn head_logits(&self, tape: &mut Tape, bound: &Bound, m_e: Var) -> Var {
        let (w, b) = self.head;
        let z = tape.matmul(m_e, bound.var(w));
        tape.add_row(z, bound.var(b))
    }

    pub fn logits(
        &self,
        tape: &mut Tape,
        bound: &Bound,
        features: &Arc<CsrMatrix>,
        inc: &Arc<Incidence>,
    ) -> Result<Var> {
        let m_e = self.hyperconv_embed(tape, bound, features, inc)?;
        Ok(self.head_logits(tape, bound, m_e))
    }
}

/// node → hyperedge mean, hyperedge → node mean, bias, rectifier.
fn hyperconv(tape: &mut Tape, z: Var, inc: &Arc<Incidence>, ones: Var, inv_degree: Var, bias: Var) -> Var {
    let e = tape.segment_mean(z, inc);
    let summed = tape.scatter_weighted(e, ones, inc);
    let mean = tape.mul_col(summed, inv_degree);
    let biased = tape.add_row(mean, bias);
    tape.relu(biased)
}

fn node_inverse_degree(tape: &mut Tape, inc: &Incidence) -> Var {
    let mut deg = vec![0.0; inc.num_nodes()];
    for m in inc.all_members() {
        for &v in m {
            deg[v] += 1.0;
        }
    }
    let inv = deg.into_iter().map(|d| if d > 0.0 { 1.0 / d } else { 0.0 }).collect();
    tape.constant(Matrix::new(inc.num_nodes(), 1, inv))
}

/// Differentiable augmentation vector of one generator.
#[derive(Debug, Clone)]
pub struct AugmentationVector {
    /// `softmax(logits)`, `|E| × 3`.
    pub soft_probs: Var,
    /// One-hot (or relaxed) sampled operations, `|E| × 3`.
    pub op_assignments: Var,
    pub ops: Vec<AugOp>,
}

/// Samples operations for every hyperedge from `logits`.
pub fn sample_augmentation(
    tape: &mut Tape,
    logits: Var,
    temperature: f64,
    rng: &mut RngState,
) -> Result<AugmentationVector> {
    let soft_probs = tape.softmax_rows(logits);
    let op_assignments = tape.gumbel_softmax(logits, temperature, true, rng)?;
    let ops = tape
        .value(op_assignments)
        .argmax_rows()
        .into_iter()
        .map(AugOp::from_index)
        .collect();
    Ok(AugmentationVector {
        soft_probs,
        op_assignments,
        ops,
    })
}

/// Surviving hyperedges as (original index, surviving members).
pub type Survivors = Vec<(usize, Vec<usize>)>;

/// Applies per-hyperedge operations. Returns the survivors and the
/// effective operations, where a mask that dropped every member has
/// become a removal.
pub fn apply_augmentation(
    h: &Hypergraph,
    ops: &[AugOp],
    stats: &StructuralStats,
    rng: &mut RngState,
) -> Result<(Survivors, Vec<AugOp>)> {
    if ops.len() != h.num_hyperedges() {
        return Err(Error::Shape(format!(
            "{} operations for {} hyperedges",
            ops.len(),
            h.num_hyperedges()
        )));
    }
    let mut survivors = Vec::new();
    let mut effective = ops.to_vec();
    for (j, (&op, members)) in ops.iter().zip(h.hyperedges()).enumerate() {
        match op {
            AugOp::Preserve => survivors.push((j, members.clone())),
            AugOp::Remove => {}
            AugOp::Mask => {
                let kept: Vec<usize> = members
                    .iter()
                    .copied()
                    .filter(|&v| !rng.bernoulli(stats.mask_prob[v]))
                    .collect();
                if kept.is_empty() {
                    effective[j] = AugOp::Remove;
                } else {
                    survivors.push((j, kept));
                }
            }
        }
    }
    Ok((survivors, effective))
}

/// Every random decision behind one view.
#[derive(Debug, Clone, PartialEq)]
pub struct ViewPlan {
    /// Gumbel noise, `|E| × 3`, row-major.
    pub noise: Vec<f64>,
    pub ops: Vec<AugOp>,
    pub survivors: Survivors,
    pub resampled: bool,
    pub fell_back: bool,
}

/// Samples operations from logit values and applies them. An empty view is
/// re-sampled once; a second empty view falls back to preserving every
/// hyperedge.
pub fn plan_view(
    h: &Hypergraph,
    stats: &StructuralStats,
    logits: &Matrix,
    temperature: f64,
    rng: &mut RngState,
) -> Result<ViewPlan> {
    if logits.shape() != [h.num_hyperedges(), NUM_OPS] {
        return Err(Error::Shape(format!(
            "logits {:?} for {} hyperedges",
            logits.shape(),
            h.num_hyperedges()
        )));
    }
    let mut resampled = false;
    for attempt in 0..2 {
        let noise = rng.gumbel_vec(logits.len());
        let ops: Vec<AugOp> = (0..logits.rows())
            .map(|r| {
                let mut best = 0;
                let mut best_v = f64::NEG_INFINITY;
                for c in 0..NUM_OPS {
                    let v = (logits.get(r, c) + noise[r * NUM_OPS + c]) / temperature;
                    if v > best_v {
                        best_v = v;
                        best = c;
                    }
                }
                AugOp::from_index(best)
            })
            .collect();
        let (survivors, ops) = apply_augmentation(h, &ops, stats, rng)?;
        if !survivors.is_empty() || h.num_hyperedges() == 0 {
            return Ok(ViewPlan {
                noise,
                ops,
                survivors,
                resampled,
                fell_back: false,
            });
        }
        if attempt == 0 {
            resampled = true;
        } else {
            return Ok(ViewPlan {
                noise,
                ops: vec![AugOp::Preserve; h.num_hyperedges()],
                survivors: h.hyperedges().iter().cloned().enumerate().collect(),
                resampled,
                fell_back: true,
            });
        }
    }
    unreachable!("loop returns on the second attempt")
}

/// An augmented view of a base hypergraph.
#[derive(Debug, Clone)]
pub struct HypergraphView<'a> {
    pub base: &'a Hypergraph,
    pub surviving_hyperedges: Survivors,
    pub aug: AugmentationVector,
}

impl HypergraphView<'_> {
    pub fn num_hyperedges(&self) -> usize {
        self.surviving_hyperedges.len()
    }

    pub fn original_ids(&self) -> Vec<usize> {
        self.surviving_hyperedges.iter().map(|(j, _)| *j).collect()
    }

    pub fn incidence(&self) -> Incidence {
        Incidence::new(
            self.base.num_nodes(),
            self.surviving_hyperedges.iter().map(|(_, m)| m.clone()).collect(),
        )
    }

    /// `op[P] + op[M]` of every surviving hyperedge, `|E_view| × 1`.
    /// Its forward value is 1 under hard sampling; gradients reach the
    /// generator through the straight-through estimator.
    pub fn keep_weights(&self, tape: &mut Tape) -> Var {
        let ids = self.original_ids();
        let rows = tape.gather_rows(self.aug.op_assignments, &ids);
        let preserve = tape.slice_cols(rows, 0, 1);
        let mask = tape.slice_cols(rows, 2, 3);
        tape.add(preserve, mask)
    }
}

/// Replays a plan on the tape. With `hard`, the operation assignments are
/// the plan's one-hots with straight-through gradients; otherwise they are
/// the relaxed Gumbel-softmax sample under the plan's noise.
pub fn realize_view<'a>(
    tape: &mut Tape,
    h: &'a Hypergraph,
    logits: Var,
    plan: &ViewPlan,
    temperature: f64,
    hard: bool,
) -> Result<HypergraphView<'a>> {
    let soft_probs = tape.softmax_rows(logits);
    let relaxed = tape.gumbel_softmax_with_noise(logits, &plan.noise, temperature, false)?;
    let op_assignments = if hard {
        let idx: Vec<usize> = plan.ops.iter().map(|&op| op as usize).collect();
        tape.straight_through(relaxed, one_hot_rows(&idx, NUM_OPS))
    } else {
        relaxed
    };
    Ok(HypergraphView {
        base: h,
        surviving_hyperedges: plan.survivors.clone(),
        aug: AugmentationVector {
            soft_probs,
            op_assignments,
            ops: plan.ops.clone(),
        },
    })
}

/// Mean squared error between the soft operation probabilities of two
/// generators.
pub fn similarity_loss(tape: &mut Tape, a1: &AugmentationVector, a2: &AugmentationVector) -> Result<Var> {
    let (s1, s2) = (tape.shape(a1.soft_probs), tape.shape(a2.soft_probs));
    if s1 != s2 {
        return Err(Error::Shape(format!("augmentation shapes {s1:?} vs {s2:?}")));
    }
    let d = tape.sub(a1.soft_probs, a2.soft_probs);
    let sq = tape.mul(d, d);
    Ok(tape.mean(sq))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hypergraph::fixtures::worked_example;

    fn features(h: &Hypergraph) -> Arc<CsrMatrix> {
        let f = h.features();
        Arc::new(CsrMatrix::from_dense(f.rows(), f.cols(), f.data()))
    }

    #[test]
    fn identical_features_give_identical_embeddings() {
        let edges = alloc::vec![alloc::vec![0, 1], alloc::vec![1, 2, 3], alloc::vec![3]];
        let h = Hypergraph::new(4, 2, edges, Matrix::filled(4, 3, 0.7), None).unwrap();
        let mut params = ParamStore::new();
        let mut rng = RngState::new(1);
        let g = ViewGenerator::new(&mut params, "g", 3, 5, 1.0, &mut rng).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let inc = Arc::new(h.incidence());
        let m = g.hyperconv_embed(&mut tape, &bound, &features(&h), &inc).unwrap();
        let v = tape.value(m);
        for r in 1..v.rows() {
            for c in 0..v.cols() {
                assert!((v.get(r, c) - v.get(0, c)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn zero_features_give_zero_embeddings() {
        let h = worked_example();
        let mut params = ParamStore::new();
        let g = ViewGenerator::new(&mut params, "g", 2, 4, 1.0, &mut RngState::new(2)).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let inc = Arc::new(h.incidence());
        let m = g.hyperconv_embed(&mut tape, &bound, &features(&h), &inc).unwrap();
        assert!(tape.value(m).data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn feature_width_mismatch_is_config_error() {
        let h = worked_example();
        let mut params = ParamStore::new();
        let g = ViewGenerator::new(&mut params, "g", 5, 4, 1.0, &mut RngState::new(2)).unwrap();
        let mut tape = Tape::new();
        let bound = params.bind(&mut tape);
        let inc = Arc::new(h.incidence());
        assert!(matches!(
            g.hyperconv_embed(&mut tape, &bound, &features(&h), &inc),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn all_preserve_is_identity() {
        let h = worked_example();
        let stats = h.structural_stats(0.2, 0.8).unwrap();
        let ops = vec![AugOp::Preserve; 4];
        let (surv, eff) = apply_augmentation(&h, &ops, &stats, &mut RngState::new(0)).unwrap();
        assert_eq!(eff, ops);
        let expected: Survivors = h.hyperedges().iter().cloned().enumerate().collect();
        assert_eq!(surv, expected);
    }

    #[test]
    fn all_remove_falls_back_after_one_resample() {
        let h = worked_example();
        let stats = h.structural_stats(0.2, 0.8).unwrap();
        let logits = Matrix::new(4, 3, [0.0, 1e6, 0.0].repeat(4));
        let plan = plan_view(&h, &stats, &logits, 1.0, &mut RngState::new(4)).unwrap();
        assert!(plan.resampled);
        assert!(plan.fell_back);
        assert_eq!(plan.survivors.len(), 4);
        assert!(plan.ops.iter().all(|&o| o == AugOp::Preserve));
    }

    #[test]
    fn mask_never_drops_zero_probability_node() {
        let h = worked_example();
        let mut stats = h.structural_stats(0.2, 0.8).unwrap();
        stats.mask_prob = vec![0.5; 9];
        stats.mask_prob[8] = 0.0;
        let mut rng = RngState::new(12);
        let mut ops = vec![AugOp::Preserve; 4];
        ops[0] = AugOp::Mask;
        for _ in 0..1000 {
            let (surv, _) = apply_augmentation(&h, &ops, &stats, &mut rng).unwrap();
            let e1 = surv.iter().find(|(j, _)| *j == 0).expect("v9 keeps e1 alive");
            assert!(e1.1.contains(&8));
        }
    }

    #[test]
    fn fully_masked_hyperedge_becomes_removal() {
        let h = worked_example();
        let mut stats = h.structural_stats(0.2, 0.8).unwrap();
        stats.mask_prob = vec![1.0; 9];
        let ops = vec![AugOp::Mask, AugOp::Preserve, AugOp::Preserve, AugOp::Preserve];
        let (surv, eff) = apply_augmentation(&h, &ops, &stats, &mut RngState::new(0)).unwrap();
        assert_eq!(eff[0], AugOp::Remove);
        assert_eq!(surv.len(), 3);
    }

    #[test]
    fn similarity_loss_examples() {
        let mut tape = Tape::new();
        let a = tape.constant(Matrix::new(1, 3, vec![1.0, 0.0, 0.0]));
        let b = tape.constant(Matrix::new(1, 3, vec![0.0, 1.0, 0.0]));
        let aug = |v: Var| AugmentationVector {
            soft_probs: v,
            op_assignments: v,
            ops: vec![AugOp::Preserve],
        };
        let l = similarity_loss(&mut tape, &aug(a), &aug(b)).unwrap();
        assert!((tape.scalar(l) - 2.0 / 3.0).abs() < 1e-15);
        let z = similarity_loss(&mut tape, &aug(a), &aug(a)).unwrap();
        assert_eq!(tape.scalar(z), 0.0);
        let c = tape.constant(Matrix::zeros(2, 3));
        assert!(similarity_loss(&mut tape, &aug(a), &aug(c)).is_err());
    }

    #[test]
    fn fixed_seed_gives_identical_assignments() {
        let logits = Matrix::new(5, 3, (0..15).map(|i| (i as f64 * 0.37).sin()).collect());
        let run = || {
            let mut tape = Tape::new();
            let l = tape.constant(logits.clone());
            sample_augmentation(&mut tape, l, 1.0, &mut RngState::new(99)).unwrap().ops
        };
        assert_eq!(run(), run());
    }
}
