//! Loss terms, the joint objective and adaptive temperatures.
//!
//! Every contrastive term is an InfoNCE over a similarity matrix `S`:
//! the anchor's positive sits on a known cell and the negatives are the
//! rest of its row (or column). Similarities use the inner product for the
//! cluster and hyperedge terms and the cosine discriminator for the
//! cross-type terms.

use alloc::format;
use alloc::string::String;
use alloc::sync::Arc;
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::sparse::Incidence;
use crate::tensor::{Matrix, Tape, Var};

/// Norm floor of the cosine discriminator.
const NORM_EPS: f64 = 1e-12;
/// Lower clamp of similarities divided into temperature upper bounds.
pub const SIMILARITY_FLOOR: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub lambda_h: f64,
    pub lambda_c: f64,
    pub lambda_e: f64,
    pub lambda_nc: f64,
    pub lambda_ne: f64,
    pub lambda_ec: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_h: 1.0,
            lambda_c: 1.0,
            lambda_e: 1.0,
            lambda_nc: 1.0,
            lambda_ne: 1.0,
            lambda_ec: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("lambda_h", self.lambda_h),
            ("lambda_c", self.lambda_c),
            ("lambda_e", self.lambda_e),
            ("lambda_nc", self.lambda_nc),
            ("lambda_ne", self.lambda_ne),
            ("lambda_ec", self.lambda_ec),
        ];
        for (name, v) in named {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be a finite non-negative number, got {v}")));
            }
        }
        Ok(())
    }
}

/// Per-term loss values of one epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub epoch: usize,
    #[serde(rename = "L_total")]
    pub total: f64,
    #[serde(rename = "L_sim")]
    pub sim: f64,
    #[serde(rename = "L_cls")]
    pub cls: f64,
    #[serde(rename = "L_h")]
    pub h: f64,
    #[serde(rename = "L_c")]
    pub c: f64,
    #[serde(rename = "L_e")]
    pub e: f64,
    #[serde(rename = "L_cl")]
    pub cl: f64,
    #[serde(rename = "L_nc")]
    pub nc: f64,
    #[serde(rename = "L_ne")]
    pub ne: f64,
    #[serde(rename = "L_ec")]
    pub ec: f64,
    #[serde(rename = "L_crocl")]
    pub crocl: f64,
}

impl LossReport {
    /// Recomputes the weighted total from the stored terms.
    pub fn recompose(&self, w: &LossWeights) -> f64 {
        let cl = w.lambda_c * self.c + w.lambda_e * self.e;
        let crocl = w.lambda_nc * self.nc + w.lambda_ne * self.ne + w.lambda_ec * self.ec;
        self.sim + self.cls + self.h + cl + crocl
    }
}

/// Scalar loss terms recorded on one tape.
#[derive(Debug, Clone, Copy)]
pub struct LossComponents {
    pub sim: Var,
    pub cls: Var,
    /// Already scaled by `lambda_h`.
    pub h: Var,
    pub c: Var,
    pub e: Var,
    pub nc: Var,
    pub ne: Var,
    pub ec: Var,
}

/// Weighted joint objective. Fails with the name of the first non-finite
/// term.
pub fn total_loss(
    tape: &mut Tape,
    parts: &LossComponents,
    weights: &LossWeights,
    epoch: usize,
) -> Result<(Var, LossReport)> {
    let named = [
        ("L_sim", parts.sim),
        ("L_cls", parts.cls),
        ("L_h", parts.h),
        ("L_c", parts.c),
        ("L_e", parts.e),
        ("L_nc", parts.nc),
        ("L_ne", parts.ne),
        ("L_ec", parts.ec),
    ];
    for (term, v) in named {
        if tape.shape(v) != [1, 1] {
            return Err(Error::Shape(format!("{term} is not a scalar")));
        }
        if !tape.scalar(v).is_finite() {
            return Err(Error::NonFinite { term, epoch });
        }
    }
    let wc = tape.scale(parts.c, weights.lambda_c);
    let we = tape.scale(parts.e, weights.lambda_e);
    let cl = tape.add(wc, we);
    let wnc = tape.scale(parts.nc, weights.lambda_nc);
    let wne = tape.scale(parts.ne, weights.lambda_ne);
    let wec = tape.scale(parts.ec, weights.lambda_ec);
    let crocl = tape.add(wnc, wne);
    let crocl = tape.add(crocl, wec);
    let mut total = tape.add(parts.sim, parts.cls);
    total = tape.add(total, parts.h);
    total = tape.add(total, cl);
    total = tape.add(total, crocl);
    if !tape.scalar(total).is_finite() {
        return Err(Error::NonFinite { term: "L_total", epoch });
    }
    let report = LossReport {
        epoch,
        total: tape.scalar(total),
        sim: tape.scalar(parts.sim),
        cls: tape.scalar(parts.cls),
        h: tape.scalar(parts.h),
        c: tape.scalar(parts.c),
        e: tape.scalar(parts.e),
        cl: tape.scalar(cl),
        nc: tape.scalar(parts.nc),
        ne: tape.scalar(parts.ne),
        ec: tape.scalar(parts.ec),
        crocl: tape.scalar(crocl),
    };
    Ok((total, report))
}

/// `Σ_{v ∈ train} −ln probs[v, y_v]`.
pub fn classification_loss(tape: &mut Tape, probs: Var, labels: Option<&[usize]>, train_ids: &[usize]) -> Result<Var> {
    let [n, c] = tape.shape(probs);
    let labels = labels.ok_or_else(|| Error::Validation("classification loss needs labels".into()))?;
    let mut at = Vec::with_capacity(train_ids.len());
    for &v in train_ids {
        if v >= n || v >= labels.len() {
            return Err(Error::Validation(format!("train id {v} has no label")));
        }
        if labels[v] >= c {
            return Err(Error::LabelOutOfRange {
                node: v,
                label: labels[v],
                num_classes: c,
            });
        }
        at.push((v, labels[v]));
    }
    let picked = tape.pick(probs, &at);
    let logs = tape.ln(picked);
    let s = tape.sum(logs);
    Ok(tape.scale(s, -1.0))
}

/// `λ_h · ½ Σ_views MSE(pred, target)`.
pub fn homogeneity_loss(tape: &mut Tape, preds: [Var; 2], targets: [&[f64]; 2], lambda_h: f64) -> Result<Var> {
    let mut terms = Vec::with_capacity(2);
    for (p, t) in preds.into_iter().zip(targets) {
        let shape = tape.shape(p);
        if shape != [t.len(), 1] {
            return Err(Error::Shape(format!(
                "homogeneity prediction {shape:?} for {} targets",
                t.len()
            )));
        }
        if t.is_empty() {
            terms.push(tape.constant(Matrix::scalar(0.0)));
            continue;
        }
        let target = tape.constant(Matrix::new(t.len(), 1, t.to_vec()));
        let d = tape.sub(p, target);
        let sq = tape.mul(d, d);
        terms.push(tape.mean(sq));
    }
    let s = tape.add(terms[0], terms[1]);
    Ok(tape.scale(s, 0.5 * lambda_h))
}

/// A `k × k` temperature table with `diag` on the diagonal and `off`
/// elsewhere.
pub fn uniform_table(k: usize, diag: f64, off: f64) -> Vec<f64> {
    let mut t = vec![off; k * k];
    for i in 0..k {
        t[i * k + i] = diag;
    }
    t
}

fn transpose_table(t: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; k * k];
    for i in 0..k {
        for j in 0..k {
            out[j * k + i] = t[i * k + j];
        }
    }
    out
}

fn inverse(t: &[f64]) -> Result<Arc<Vec<f64>>> {
    if let Some(bad) = t.iter().find(|&&x| !(x > 0.0) || !x.is_finite()) {
        return Err(Error::Parameter(format!("temperature must be positive and finite, got {bad}")));
    }
    Ok(Arc::new(t.iter().map(|&x| 1.0 / x).collect()))
}

/// `Σ_i −log softmax(row i of S ⊙ 1/T)[i]`.
fn diagonal_nce(tape: &mut Tape, s: Var, table: &[f64]) -> Result<Var> {
    let k = tape.shape(s)[0];
    let scaled = tape.mul_const(s, inverse(table)?);
    let logp = tape.log_softmax_rows(scaled);
    let diag: Vec<(usize, usize)> = (0..k).map(|i| (i, i)).collect();
    let picked = tape.pick(logp, &diag);
    let total = tape.sum(picked);
    Ok(tape.scale(total, -1.0))
}

/// Two-way diagonal InfoNCE on `S` (view-1 anchors on rows) averaged over
/// `2k` anchors. `table[q·k + i]` is the temperature of the pair
/// (view-1 anchor q, view-2 candidate i); view-2 anchors use its transpose.
fn symmetric_nce(tape: &mut Tape, s: Var, table: &[f64]) -> Result<Var> {
    let k = tape.shape(s)[0];
    if table.len() != k * k {
        return Err(Error::Shape(format!("temperature table of {} for {k} anchors", table.len())));
    }
    let l1 = diagonal_nce(tape, s, table)?;
    let st = tape.transpose(s);
    let l2 = diagonal_nce(tape, st, &transpose_table(table, k))?;
    let sum = tape.add(l1, l2);
    Ok(tape.scale(sum, 1.0 / (2 * k) as f64))
}

fn check_row_stochastic(m: &Matrix, what: &str) -> Result<()> {
    for r in 0..m.rows() {
        let row = m.row(r);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&x| !(x >= 0.0)) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::Validation(format!("{what} row {r} is not a probability vector")));
        }
    }
    Ok(())
}

/// Cluster-level loss contrasting columns of two `n × C` assignment
/// matrices with inner-product similarity.
pub fn cluster_contrastive_loss(tape: &mut Tape, z1: Var, z2: Var, table: &[f64]) -> Result<Var> {
    if tape.shape(z1) != tape.shape(z2) {
        return Err(Error::Shape(format!(
            "cluster projections {:?} vs {:?}",
            tape.shape(z1),
            tape.shape(z2)
        )));
    }
    check_row_stochastic(tape.value(z1), "view-1 cluster projection")?;
    check_row_stochastic(tape.value(z2), "view-2 cluster projection")?;
    let z1t = tape.transpose(z1);
    let s = tape.matmul(z1t, z2);
    symmetric_nce(tape, s, table)
}

/// Hyperedge-level loss over rows aligned on the hyperedges shared by both
/// views. No shared hyperedges gives 0.
pub fn hyperedge_contrastive_loss(tape: &mut Tape, z1: Var, z2: Var, table: &[f64]) -> Result<Var> {
    if tape.shape(z1) != tape.shape(z2) {
        return Err(Error::Shape(format!(
            "hyperedge projections {:?} vs {:?}",
            tape.shape(z1),
            tape.shape(z2)
        )));
    }
    if tape.shape(z1)[0] == 0 {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    let s = tape.matmul_nt(z1, z2);
    symmetric_nce(tape, s, table)
}

/// Cosine similarity matrix `D[i, j] = cos(a_i, b_j)`.
pub fn discriminator(tape: &mut Tape, a: Var, b: Var) -> Var {
    let na = tape.normalize_rows(a, NORM_EPS);
    let nb = tape.normalize_rows(b, NORM_EPS);
    tape.matmul_nt(na, nb)
}

/// Node-cluster loss. `zc1`, `zc2` are cluster projections already mapped
/// to the node projection width. Each anchor pair (v, v) is contrasted
/// against the node embeddings of every other node.
pub fn node_cluster_loss(tape: &mut Tape, zv: [Var; 2], zc: [Var; 2], tau: f64) -> Result<Var> {
    let shape = tape.shape(zv[0]);
    for v in [zv[1], zc[0], zc[1]] {
        if tape.shape(v) != shape {
            return Err(Error::Shape(format!("node-cluster inputs {:?} vs {shape:?}", tape.shape(v))));
        }
    }
    let n = shape[0];
    if n == 0 {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    let inv = inverse(&[tau])?[0];
    let diag: Vec<(usize, usize)> = (0..n).map(|i| (i, i)).collect();
    let mut terms = Vec::with_capacity(2);
    for (p, q) in [(0, 1), (1, 0)] {
        let d = discriminator(tape, zv[p], zc[q]);
        let scaled = tape.scale(d, inv);
        let logp = tape.log_softmax_cols(scaled);
        let picked = tape.pick(logp, &diag);
        terms.push(tape.sum(picked));
    }
    let s = tape.add(terms[0], terms[1]);
    Ok(tape.scale(s, -1.0 / (2 * n) as f64))
}

/// Shared body of the node-hyperedge and hyperedge-cluster losses.
/// `inc[q]` is the incidence of view `q`, whose hyperedges are the rows of
/// `ze[q]`. The normaliser is the total incident pair count of both views.
fn incidence_nce(tape: &mut Tape, zn: [Var; 2], ze: [Var; 2], inc: [&Incidence; 2], tau: f64) -> Result<Var> {
    let [n, d] = tape.shape(zn[0]);
    if tape.shape(zn[1]) != [n, d] {
        return Err(Error::Shape("node-side inputs differ in shape".into()));
    }
    for q in 0..2 {
        let s = tape.shape(ze[q]);
        if s != [inc[q].num_edges(), d] || inc[q].num_nodes() != n {
            return Err(Error::Shape(format!(
                "view {} hyperedge projections {s:?} for {} hyperedges over {} nodes",
                q + 1,
                inc[q].num_edges(),
                inc[q].num_nodes()
            )));
        }
    }
    let m = inc[0].num_pairs() + inc[1].num_pairs();
    if m == 0 {
        return Ok(tape.constant(Matrix::scalar(0.0)));
    }
    let inv = inverse(&[tau])?[0];
    let mut terms = Vec::with_capacity(4);
    for (p, q) in [(0, 1), (1, 0)] {
        let pairs = inc[q].pairs();
        if pairs.is_empty() {
            continue;
        }
        let dm = discriminator(tape, zn[p], ze[q]);
        let scaled = tape.scale(dm, inv);
        let over_nodes = tape.log_softmax_cols(scaled);
        let over_edges = tape.log_softmax_rows(scaled);
        let a = tape.pick(over_nodes, &pairs);
        let b = tape.pick(over_edges, &pairs);
        terms.push(tape.sum(a));
        terms.push(tape.sum(b));
    }
    let mut s = terms[0];
    for &t in &terms[1..] {
        s = tape.add(s, t);
    }
    Ok(tape.scale(s, -1.0 / m as f64))
}

pub fn node_hyperedge_loss(tape: &mut Tape, zv: [Var; 2], ze: [Var; 2], inc: [&Incidence; 2], tau: f64) -> Result<Var> {
    incidence_nce(tape, zv, ze, inc, tau)
}

/// As [`node_hyperedge_loss`] with aligned cluster projections in place of
/// node projections.
pub fn hyperedge_cluster_loss(tape: &mut Tape, zc: [Var; 2], ze: [Var; 2], inc: [&Incidence; 2], tau: f64) -> Result<Var> {
    incidence_nce(tape, zc, ze, inc, tau)
}

/// Ratio of each negative's gradient magnitude to the positive's for
/// `ℓ = −log(e^{s_p/τ_p} / (e^{s_p/τ_p} + Σ e^{s_i/τ_i}))`.
pub fn relative_penalty(s_p: f64, s_neg: &[f64], tau_p: f64, tau_neg: &[f64]) -> Result<Vec<f64>> {
    if s_neg.len() != tau_neg.len() {
        return Err(Error::Shape(format!("{} negatives with {} temperatures", s_neg.len(), tau_neg.len())));
    }
    if !(tau_p > 0.0) || tau_neg.iter().any(|&t| !(t > 0.0)) {
        return Err(Error::Parameter("temperatures must be positive".into()));
    }
    let mut logits = Vec::with_capacity(1 + s_neg.len());
    logits.push(s_p / tau_p);
    logits.extend(s_neg.iter().zip(tau_neg).map(|(s, t)| s / t));
    let mut probs = logits;
    crate::tensor::softmax_in_place(&mut probs);
    let rest: f64 = probs[1..].iter().sum();
    let denom = rest / tau_p;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::Diagnostic(format!("positive-pair gradient is {denom}")));
    }
    Ok(probs[1..].iter().zip(tau_neg).map(|(p, t)| p / t / denom).collect())
}

/// Base temperatures and the adaptive schedule's bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TemperatureConfig {
    pub tau_c: f64,
    pub tau_e: f64,
    pub tau_nc: f64,
    pub tau_ne: f64,
    pub tau_ec: f64,
    pub tau_c_ub: f64,
    pub tau_e_ub: f64,
    pub eps_c: f64,
    pub eps_e: f64,
}

impl Default for TemperatureConfig {
    fn default() -> Self {
        Self {
            tau_c: 0.5,
            tau_e: 0.5,
            tau_nc: 0.5,
            tau_ne: 0.5,
            tau_ec: 0.5,
            tau_c_ub: 0.5,
            tau_e_ub: 0.5,
            eps_c: 0.2,
            eps_e: 0.2,
        }
    }
}

impl TemperatureConfig {
    pub fn validate(&self) -> Result<()> {
        let named = [
            ("tau_c", self.tau_c),
            ("tau_e", self.tau_e),
            ("tau_nc", self.tau_nc),
            ("tau_ne", self.tau_ne),
            ("tau_ec", self.tau_ec),
            ("tau_c_ub", self.tau_c_ub),
            ("tau_e_ub", self.tau_e_ub),
        ];
        for (name, v) in named {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [("eps_c", self.eps_c), ("eps_e", self.eps_e)] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite, got {v}")));
            }
        }
        Ok(())
    }
}

/// Effective temperatures of the current epoch.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TemperatureState {
    pub base: TemperatureConfig,
    pub epoch: usize,
    /// Mean pairwise cosine of class centers, if at least two exist.
    pub m_c: Option<f64>,
    pub m_e: Option<f64>,
    num_clusters: usize,
    cluster_table: Vec<f64>,
    hyperedge_ids: Vec<usize>,
    hyperedge_table: Vec<f64>,
}

impl TemperatureState {
    pub fn new(base: TemperatureConfig, num_clusters: usize) -> Result<Self> {
        base.validate()?;
        Ok(Self {
            base,
            epoch: 0,
            m_c: None,
            m_e: None,
            num_clusters,
            cluster_table: uniform_table(num_clusters, base.tau_c, base.tau_c),
            hyperedge_ids: Vec::new(),
            hyperedge_table: Vec::new(),
        })
    }

    /// `C × C`, row = view-1 anchor column.
    pub fn cluster_table(&self) -> &[f64] {
        &self.cluster_table
    }

    /// `k × k` table over `shared` hyperedge ids. Falls back to the base
    /// temperature when the ids differ from the last adaptation.
    pub fn hyperedge_table(&self, shared: &[usize]) -> Vec<f64> {
        if shared == self.hyperedge_ids.as_slice() {
            self.hyperedge_table.clone()
        } else {
            uniform_table(shared.len(), self.base.tau_e, self.base.tau_e)
        }
    }
}

/// Value snapshots read by [`adapt_temperatures`].
#[derive(Debug, Clone, Copy)]
pub struct AdaptInputs<'a> {
    /// Cluster projections of both views, `n × C`.
    pub zc: [&'a Matrix; 2],
    /// Node projections of both views, `n × nproj`.
    pub zv: [&'a Matrix; 2],
    /// Hyperedge projections on the shared hyperedges, `k × nproj`.
    pub ze: [&'a Matrix; 2],
    pub shared_ids: &'a [usize],
    /// Labeled training nodes per class.
    pub classes: &'a [Vec<usize>],
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    let na = libm::sqrt(a.iter().map(|x| x * x).sum());
    let nb = libm::sqrt(b.iter().map(|x| x * x).sum());
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot / (na * nb)
    }
}

/// Mean of `½(m1 + m2)` rows over each non-empty class.
fn class_centers(m: [&Matrix; 2], classes: &[Vec<usize>]) -> Vec<Vec<f64>> {
    let cols = m[0].cols();
    classes
        .iter()
        .filter(|members| !members.is_empty())
        .map(|members| {
            let mut c = vec![0.0; cols];
            for &v in members {
                for (j, slot) in c.iter_mut().enumerate() {
                    *slot += 0.5 * (m[0].get(v, j) + m[1].get(v, j));
                }
            }
            let k = members.len() as f64;
            c.iter_mut().for_each(|x| *x /= k);
            c
        })
        .collect()
}

fn mean_pairwise_cosine(centers: &[Vec<f64>]) -> Option<f64> {
    if centers.len() < 2 {
        return None;
    }
    let mut total = 0.0;
    let mut count = 0usize;
    for i in 0..centers.len() {
        for j in i + 1..centers.len() {
            total += cosine(&centers[i], &centers[j]);
            count += 1;
        }
    }
    Some(total / count as f64)
}

/// Negative-pair temperatures: `ub` while the centers are still close,
/// otherwise `ub / clamp(cos(a_q, b_i))`. Positive pairs keep `base`.
fn pair_table(a: &[Vec<f64>], b: &[Vec<f64>], base: f64, ub: f64, adapt: bool) -> Vec<f64> {
    let k = a.len();
    let mut t = uniform_table(k, base, ub);
    if adapt {
        for q in 0..k {
            for i in 0..k {
                if q != i {
                    let s = cosine(&a[q], &b[i]).clamp(SIMILARITY_FLOOR, 1.0);
                    t[q * k + i] = ub / s;
                }
            }
        }
    }
    t
}

fn columns(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.cols()).map(|c| m.column(c)).collect()
}

fn rows(m: &Matrix) -> Vec<Vec<f64>> {
    (0..m.rows()).map(|r| m.row(r).to_vec()).collect()
}

/// Updates the cluster and hyperedge temperature tables for `epoch`.
/// Returns warnings about classes without labeled nodes.
pub fn adapt_temperatures(state: &mut TemperatureState, inputs: &AdaptInputs<'_>, epoch: usize) -> Result<Vec<String>> {
    let [n, c] = inputs.zc[0].shape();
    if inputs.zc[1].shape() != [n, c] || c != state.num_clusters {
        return Err(Error::Shape(format!("cluster projections for {} clusters", state.num_clusters)));
    }
    if inputs.zv[0].shape() != inputs.zv[1].shape() || inputs.zv[0].rows() != n {
        return Err(Error::Shape("node projections differ in shape".into()));
    }
    let k = inputs.shared_ids.len();
    if inputs.ze[0].rows() != k || inputs.ze[1].shape() != inputs.ze[0].shape() {
        return Err(Error::Shape(format!("hyperedge projections for {k} shared hyperedges")));
    }
    let mut warnings = Vec::new();
    for (i, members) in inputs.classes.iter().enumerate() {
        if members.is_empty() {
            warnings.push(format!("class {i} has no labeled nodes and is left out of the centers"));
        }
        if let Some(&v) = members.iter().find(|&&v| v >= n) {
            return Err(Error::Index { index: v, len: n });
        }
    }

    let b = state.base;
    state.m_c = mean_pairwise_cosine(&class_centers(inputs.zc, inputs.classes));
    state.m_e = mean_pairwise_cosine(&class_centers(inputs.zv, inputs.classes));
    let adapt_c = state.m_c.is_some_and(|m| m < b.eps_c);
    let adapt_e = state.m_e.is_some_and(|m| m < b.eps_e);
    state.cluster_table = pair_table(
        &columns(inputs.zc[0]),
        &columns(inputs.zc[1]),
        b.tau_c,
        b.tau_c_ub,
        adapt_c,
    );
    state.hyperedge_table = pair_table(&rows(inputs.ze[0]), &rows(inputs.ze[1]), b.tau_e, b.tau_e_ub, adapt_e);
    state.hyperedge_ids = inputs.shared_ids.to_vec();
    state.epoch = epoch;
    Ok(warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    const CLOSED: f64 = 0.31326168751822286; // ln(1 + e^-1)

    fn consts(tape: &mut Tape, m: Matrix) -> Var {
        tape.constant(m)
    }

    #[test]
    fn classification_examples() {
        let mut tape = Tape::new();
        let p = consts(&mut tape, Matrix::from_rows(&[vec![1.0, 0.0], vec![0.5, 0.5]]));
        let l = classification_loss(&mut tape, p, Some(&[0, 1]), &[0]).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let l = classification_loss(&mut tape, p, Some(&[0, 1]), &[1]).unwrap();
        assert!((tape.scalar(l) - core::f64::consts::LN_2).abs() < 1e-15);
        assert!(classification_loss(&mut tape, p, Some(&[0]), &[1]).is_err());
        assert!(classification_loss(&mut tape, p, None, &[0]).is_err());
    }

    #[test]
    fn homogeneity_examples() {
        let mut tape = Tape::new();
        let p = consts(&mut tape, Matrix::filled(1, 1, 0.5));
        let l = homogeneity_loss(&mut tape, [p, p], [&[1.0], &[1.0]], 1.0).unwrap();
        assert!((tape.scalar(l) - 0.25).abs() < 1e-15);
        let l = homogeneity_loss(&mut tape, [p, p], [&[1.0], &[1.0]], 0.0).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let l = homogeneity_loss(&mut tape, [p, p], [&[0.5], &[0.5]], 1.0).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        assert!(homogeneity_loss(&mut tape, [p, p], [&[1.0, 0.0], &[1.0]], 1.0).is_err());
    }

    #[test]
    fn cluster_closed_form() {
        let mut tape = Tape::new();
        let z = consts(&mut tape, Matrix::identity(2));
        let l = cluster_contrastive_loss(&mut tape, z, z, &uniform_table(2, 1.0, 1.0)).unwrap();
        assert!((tape.scalar(l) - CLOSED).abs() < 1e-12);
        let one = consts(&mut tape, Matrix::filled(3, 1, 1.0));
        let l = cluster_contrastive_loss(&mut tape, one, one, &[0.5]).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let bad = consts(&mut tape, Matrix::filled(2, 2, 0.7));
        assert!(matches!(
            cluster_contrastive_loss(&mut tape, bad, bad, &uniform_table(2, 1.0, 1.0)),
            Err(Error::Validation(_))
        ));
    }

    #[test]
    fn hyperedge_examples() {
        let mut tape = Tape::new();
        let z = consts(&mut tape, Matrix::identity(2));
        let l = hyperedge_contrastive_loss(&mut tape, z, z, &uniform_table(2, 1.0, 1.0)).unwrap();
        assert!((tape.scalar(l) - CLOSED).abs() < 1e-12);
        let one = consts(&mut tape, Matrix::new(1, 3, vec![0.3, -1.0, 2.0]));
        let l = hyperedge_contrastive_loss(&mut tape, one, one, &[0.5]).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let empty = consts(&mut tape, Matrix::zeros(0, 3));
        let l = hyperedge_contrastive_loss(&mut tape, empty, empty, &[]).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
    }

    #[test]
    fn node_cluster_examples() {
        let mut tape = Tape::new();
        let z = consts(&mut tape, Matrix::identity(2));
        let l = node_cluster_loss(&mut tape, [z, z], [z, z], 1.0).unwrap();
        assert!((tape.scalar(l) - CLOSED).abs() < 1e-12);
        let one = consts(&mut tape, Matrix::new(1, 2, vec![0.3, 0.4]));
        let l = node_cluster_loss(&mut tape, [one, one], [one, one], 0.5).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
    }

    #[test]
    fn incidence_examples() {
        let mut tape = Tape::new();
        let single = Incidence::new(1, vec![vec![0]]);
        let a = consts(&mut tape, Matrix::new(1, 2, vec![0.2, -0.9]));
        let l = node_hyperedge_loss(&mut tape, [a, a], [a, a], [&single, &single], 0.5).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
        let l = hyperedge_cluster_loss(&mut tape, [a, a], [a, a], [&single, &single], 0.5).unwrap();
        assert_eq!(tape.scalar(l), 0.0);

        // Two disjoint singletons: four ordered (pair, view) terms, each
        // with two −ln(e/(e+1)) parts, over 2M = 4.
        let disjoint = Incidence::new(2, vec![vec![0], vec![1]]);
        let z = consts(&mut tape, Matrix::identity(2));
        let l = node_hyperedge_loss(&mut tape, [z, z], [z, z], [&disjoint, &disjoint], 1.0).unwrap();
        assert!((tape.scalar(l) - 2.0 * CLOSED).abs() < 1e-12);
        let m = hyperedge_cluster_loss(&mut tape, [z, z], [z, z], [&disjoint, &disjoint], 1.0).unwrap();
        assert_eq!(tape.scalar(l), tape.scalar(m));

        let none = Incidence::new(2, vec![]);
        let e = consts(&mut tape, Matrix::zeros(0, 2));
        let l = node_hyperedge_loss(&mut tape, [z, z], [e, e], [&none, &none], 1.0).unwrap();
        assert_eq!(tape.scalar(l), 0.0);
    }

    #[test]
    fn total_loss_examples() {
        let mut tape = Tape::new();
        let zero = consts(&mut tape, Matrix::scalar(0.0));
        let half = consts(&mut tape, Matrix::scalar(0.5));
        let parts = LossComponents {
            sim: zero,
            cls: zero,
            h: zero,
            c: half,
            e: zero,
            nc: zero,
            ne: zero,
            ec: zero,
        };
        let w = LossWeights {
            lambda_h: 0.0,
            lambda_c: 1.0,
            lambda_e: 0.0,
            lambda_nc: 0.0,
            lambda_ne: 0.0,
            lambda_ec: 0.0,
        };
        let (t, report) = total_loss(&mut tape, &parts, &w, 3).unwrap();
        assert_eq!(tape.scalar(t), 0.5);
        assert_eq!(report.epoch, 3);
        assert_eq!(report.recompose(&w), report.total);

        let zw = LossWeights {
            lambda_c: 0.0,
            ..w
        };
        let (t, _) = total_loss(&mut tape, &parts, &zw, 0).unwrap();
        assert_eq!(tape.scalar(t), 0.0);

        let nan = consts(&mut tape, Matrix::scalar(f64::NAN));
        let bad = LossComponents { ne: nan, ..parts };
        assert_eq!(
            total_loss(&mut tape, &bad, &w, 7).unwrap_err(),
            Error::NonFinite { term: "L_ne", epoch: 7 }
        );
    }

    #[test]
    fn relative_penalty_examples() {
        let r = relative_penalty(0.7, &[0.2], 0.5, &[0.5]).unwrap();
        assert!((r[0] - 1.0).abs() < 1e-12);
        let r = relative_penalty(0.7, &[0.2, 0.2], 0.5, &[0.5, 0.5]).unwrap();
        assert!((r[0] - 0.5).abs() < 1e-12 && (r[1] - 0.5).abs() < 1e-12);
        assert!(matches!(relative_penalty(0.7, &[], 0.5, &[]), Err(Error::Diagnostic(_))));
    }

    #[test]
    fn adaptation_branches() {
        let base = TemperatureConfig::default();
        let mut state = TemperatureState::new(base, 2).unwrap();
        assert!(state.cluster_table().iter().all(|&t| t == 0.5));

        // Identical class centers: similarity 1 is above the threshold.
        let same = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5]]);
        let ze = Matrix::zeros(0, 2);
        let classes = vec![vec![0], vec![1]];
        let inputs = AdaptInputs {
            zc: [&same, &same],
            zv: [&same, &same],
            ze: [&ze, &ze],
            shared_ids: &[],
            classes: &classes,
        };
        adapt_temperatures(&mut state, &inputs, 1).unwrap();
        assert!((state.m_c.unwrap() - 1.0).abs() < 1e-12);
        assert!(state.cluster_table().iter().all(|&t| t == base.tau_c_ub));

        // Orthogonal centers: below the threshold, so negatives use ub / s_z.
        let zc1 = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let zc2 = Matrix::from_rows(&[vec![0.95, 0.05], vec![0.05, 0.95]]);
        let inputs = AdaptInputs {
            zc: [&zc1, &zc2],
            zv: [&zc1, &zc1],
            ..inputs
        };
        adapt_temperatures(&mut state, &inputs, 2).unwrap();
        assert!(state.m_c.unwrap() < base.eps_c);
        let s = cosine(&zc1.column(0), &zc2.column(1));
        assert!((state.cluster_table()[1] - 0.5 / s).abs() < 1e-15);
        assert_eq!(state.cluster_table()[0], base.tau_c);
        assert_eq!(state.epoch, 2);
    }

    #[test]
    fn division_example() {
        let a = vec![vec![1.0, 0.0], vec![0.0, 1.0]];
        let b = vec![vec![1.0, 0.0], vec![0.8, 0.6]];
        let t = pair_table(&a, &b, 0.5, 0.5, true);
        assert!((t[1] - 0.625).abs() < 1e-15);
    }

    #[test]
    fn empty_class_warns() {
        let mut state = TemperatureState::new(TemperatureConfig::default(), 2).unwrap();
        let zc = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]);
        let ze = Matrix::zeros(0, 2);
        let classes = vec![vec![0, 1], vec![]];
        let inputs = AdaptInputs {
            zc: [&zc, &zc],
            zv: [&zc, &zc],
            ze: [&ze, &ze],
            shared_ids: &[],
            classes: &classes,
        };
        let w = adapt_temperatures(&mut state, &inputs, 0).unwrap();
        assert_eq!(w.len(), 1);
        assert_eq!(state.m_c, None);
    }
}
