//! Homogeneity-weighted hypergraph encoder and the projection heads.

use alloc::format;
use alloc::sync::Arc;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::params::{Bound, ParamId, ParamStore};
use crate::rng::RngState;
use crate::sparse::{CsrMatrix, Incidence};
use crate::tensor::{Tape, Var};

/// Two-layer encoder weights.
#[derive(Debug, Clone)]
pub struct EncoderParams {
    pub w1: ParamId,
    pub w2: ParamId,
    in_dim: usize,
}

impl EncoderParams {
    pub fn new(params: &mut ParamStore, in_dim: usize, nhid: usize, rng: &mut RngState) -> Result<Self> {
        Ok(Self {
            w1: params.glorot("encoder.layer1.weight", in_dim, nhid, rng)?,
            w2: params.glorot("encoder.layer2.weight", nhid, nhid, rng)?,
            in_dim,
        })
    }
}

/// Encoder outputs for one view.
#[derive(Debug, Clone, Copy)]
pub struct Embeddings {
    /// First-layer node output, `n × nhid`.
    pub hidden: Var,
    /// Final node embeddings, `n × nhid`.
    pub nodes: Var,
    /// Final hyperedge embeddings, `|E_view| × nhid`.
    pub hyperedges: Var,
}

/// One propagation layer on dense input:
/// `h_v ← (h_v + Σ_{e ∋ v} w_e · mean_{u ∈ e} h_u) · W`.
/// Returns the node output and the pre-transform hyperedge means.
pub fn propagate_layer(tape: &mut Tape, h: Var, w: Var, inc: &Arc<Incidence>, weights: Var) -> (Var, Var) {
    let he = tape.segment_mean(h, inc);
    let agg = tape.scatter_weighted(he, weights, inc);
    let mixed = tape.add(h, agg);
    (tape.matmul(mixed, w), he)
}

/// Encodes one view. `weights` holds `homogeneity · keep` for every
/// surviving hyperedge of `inc`.
///
/// The first layer is evaluated as `XW + Σ w_e · mean(XW)`, which equals
/// `propagate_layer` on `X` but keeps the sparse product at the front.
pub fn encode(
    tape: &mut Tape,
    bound: &Bound,
    enc: &EncoderParams,
    features: &Arc<CsrMatrix>,
    inc: &Arc<Incidence>,
    weights: Var,
) -> Result<Embeddings> {
    if features.cols() != enc.in_dim {
        return Err(Error::Config(format!(
            "encoder expects {} feature columns, got {}",
            enc.in_dim,
            features.cols()
        )));
    }
    if tape.shape(weights) != [inc.num_edges(), 1] {
        return Err(Error::Shape(format!(
            "hyperedge weights {:?} for {} hyperedges",
            tape.shape(weights),
            inc.num_edges()
        )));
    }
    let xw = tape.sp_matmul(features, bound.var(enc.w1));
    let he = tape.segment_mean(xw, inc);
    let agg = tape.scatter_weighted(he, weights, inc);
    let pre = tape.add(xw, agg);
    let hidden = tape.relu(pre);
    let (nodes, hyperedges) = propagate_layer(tape, hidden, bound.var(enc.w2), inc, weights);
    Ok(Embeddings {
        hidden,
        nodes,
        hyperedges,
    })
}

/// Two-layer perceptron with a rectified hidden layer.
#[derive(Debug, Clone, Copy)]
pub struct Mlp {
    pub w1: ParamId,
    pub b1: ParamId,
    pub w2: ParamId,
    pub b2: ParamId,
}

impl Mlp {
    pub fn new(
        params: &mut ParamStore,
        name: &str,
        dims: [usize; 3],
        rng: &mut RngState,
    ) -> Result<Self> {
        Ok(Self {
            w1: params.glorot(&format!("{name}.fc1.weight"), dims[0], dims[1], rng)?,
            b1: params.zeros(&format!("{name}.fc1.bias"), 1, dims[1]),
            w2: params.glorot(&format!("{name}.fc2.weight"), dims[1], dims[2], rng)?,
            b2: params.zeros(&format!("{name}.fc2.bias"), 1, dims[2]),
        })
    }

    pub fn forward(&self, tape: &mut Tape, bound: &Bound, x: Var) -> Var {
        let z = tape.matmul(x, bound.var(self.w1));
        let z = tape.add_row(z, bound.var(self.b1));
        let z = tape.relu(z);
        let z = tape.matmul(z, bound.var(self.w2));
        tape.add_row(z, bound.var(self.b2))
    }
}

/// Projection, classification and regression heads.
#[derive(Debug, Clone)]
pub struct HeadsParams {
    pub cluster: Mlp,
    pub node: Mlp,
    pub hyperedge: Mlp,
    pub classifier: Mlp,
    pub regressor: Mlp,
    /// Maps cluster projections into the node/hyperedge projection space.
    pub align: ParamId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Projection {
    Cluster,
    Node,
    Hyperedge,
}

impl HeadsParams {
    pub fn new(
        params: &mut ParamStore,
        nhid: usize,
        nproj: usize,
        mlp_hidden: usize,
        num_classes: usize,
        rng: &mut RngState,
    ) -> Result<Self> {
        Ok(Self {
            cluster: Mlp::new(params, "head.cluster", [nhid, nproj, num_classes], rng)?,
            node: Mlp::new(params, "head.node", [nhid, nproj, nproj], rng)?,
            hyperedge: Mlp::new(params, "head.hyperedge", [nhid, nproj, nproj], rng)?,
            classifier: Mlp::new(params, "head.classifier", [nhid, mlp_hidden, num_classes], rng)?,
            regressor: Mlp::new(params, "head.regressor", [nhid, mlp_hidden, 1], rng)?,
            align: params.glorot("head.align.weight", num_classes, nproj, rng)?,
        })
    }
}

/// Applies one projection head. Cluster projections are row-softmaxed.
pub fn project(tape: &mut Tape, bound: &Bound, heads: &HeadsParams, x: Var, kind: Projection) -> Var {
    match kind {
        Projection::Cluster => {
            let z = heads.cluster.forward(tape, bound, x);
            tape.softmax_rows(z)
        }
        Projection::Node => heads.node.forward(tape, bound, x),
        Projection::Hyperedge => heads.hyperedge.forward(tape, bound, x),
    }
}

/// Cluster projections mapped to `nproj` columns.
pub fn align_clusters(tape: &mut Tape, bound: &Bound, heads: &HeadsParams, zc: Var) -> Var {
    tape.matmul(zc, bound.var(heads.align))
}

/// Class probabilities from the mean of two views' node embeddings.
pub fn classify(tape: &mut Tape, bound: &Bound, heads: &HeadsParams, h1: Var, h2: Var) -> Var {
    let sum = tape.add(h1, h2);
    let mean = tape.scale(sum, 0.5);
    let logits = heads.classifier.forward(tape, bound, mean);
    tape.softmax_rows(logits)
}

/// Predicted homogeneity in (0, 1) per hyperedge.
pub fn regress_homogeneity(tape: &mut Tape, bound: &Bound, heads: &HeadsParams, he: Var) -> Var {
    let z = heads.regressor.forward(tape, bound, he);
    tape.sigmoid(z)
}

/// Node ids per class among `ids`.
pub fn class_members(labels: &[usize], ids: &[usize], num_classes: usize) -> Vec<Vec<usize>> {
    let mut out = alloc::vec![Vec::new(); num_classes];
    for &v in ids {
        out[labels[v]].push(v);
    }
    out
}
