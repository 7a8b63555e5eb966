//! NodeMixup: labeled/pseudo-labeled pair mixing with NLD-aware sampling.
//!
//! Per refresh the trainer
//!
//! 1. builds a pseudo-labeled set from confident predictions on unlabeled
//!    nodes ([`build_pseudo_labels`]),
//! 2. computes neighborhood label distributions ([`compute_nld`]),
//! 3. samples one same-class and one different-class partner per labeled
//!    node with weights from [`sampling_weight`] ([`sample_pairs`]),
//! 4. materializes the mixed inputs ([`build_batches`]).
//!
//! Same-class pairs also mix adjacency rows and columns and run through the
//! GCN; different-class pairs run through the identity-propagation (MLP)
//! path. [`nodemixup_loss`] combines both with the supervised loss.

use rand::distr::weighted::WeightedIndex;
use rand::Rng as _;
use rand_distr::{Beta, Distribution};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphalg::{mix_adjacency, sym_normalize, CsrGraph, MixSelector, PairMix};
use crate::matrix::{argmax, dot, Matrix};
use crate::nn::{backward, forward, masked_cross_entropy, Gradients, Mode, ModelParams, Propagation};
use crate::rng::Rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct MixupConfig {
    /// Weight of the same-class mixup loss.
    pub lambda_intra: f64,
    /// Weight of the different-class mixup loss.
    pub lambda_inter: f64,
    /// Strength of NLD similarity in the sampling weight.
    pub beta_s: f64,
    /// Strength of the degree penalty in the sampling weight.
    pub beta_d: f64,
    /// Pseudo-label confidence threshold (inclusive).
    pub gamma: f64,
    /// NLD sharpening temperature.
    pub tau: f64,
    /// Shape of the symmetric Beta distribution the mixing ratio is drawn from.
    pub alpha: f64,
    /// Epochs trained on the supervised loss alone before mixing starts.
    pub warmup_epochs: usize,
    /// Pseudo-labels and NLDs are recomputed every this many epochs.
    pub refresh_every: usize,
    /// Pairs are redrawn every this many epochs; defaults to `refresh_every`.
    pub pair_resample_every: Option<usize>,
    /// Use predicted probabilities instead of one-hot predictions in the NLD.
    pub soft_nld: bool,
    /// Count a node's own label in its NLD (the adjacency carries self-loops).
    pub nld_include_self: bool,
}

impl Default for MixupConfig {
    fn default() -> Self {
        Self {
            lambda_intra: 1.0,
            lambda_inter: 1.0,
            beta_s: 1.0,
            beta_d: 1.0,
            gamma: 0.7,
            tau: 0.5,
            alpha: 1.0,
            warmup_epochs: 10,
            refresh_every: 1,
            pair_resample_every: None,
            soft_nld: false,
            nld_include_self: true,
        }
    }
}

impl MixupConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        let finite_nonneg = |v: f64| v.is_finite() && v >= 0.0;
        if !finite_nonneg(self.lambda_intra) || !finite_nonneg(self.lambda_inter) {
            return bad(format!(
                "loss weights must be finite and >= 0 (lambda_intra={}, lambda_inter={})",
                self.lambda_intra, self.lambda_inter
            ));
        }
        if !(self.beta_s > 0.0 && self.beta_d > 0.0 && self.beta_s.is_finite() && self.beta_d.is_finite()) {
            return bad(format!(
                "beta_s and beta_d must be > 0 (got {}, {})",
                self.beta_s, self.beta_d
            ));
        }
        if !(self.gamma > 0.0 && self.gamma <= 1.0) {
            return bad(format!("gamma {} outside (0, 1]", self.gamma));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad(format!("tau {} outside (0, 1]", self.tau));
        }
        if !finite_nonneg(self.alpha) {
            return bad(format!("alpha {} must be >= 0", self.alpha));
        }
        if self.refresh_every == 0 || self.pair_resample_every == Some(0) {
            return bad("refresh intervals must be >= 1".into());
        }
        Ok(())
    }

    pub fn pair_interval(&self) -> usize {
        self.pair_resample_every.unwrap_or(self.refresh_every)
    }
}

/// `λ·a + (1 − λ)·b`.
pub fn mix(a: &[f64], b: &[f64], lambda: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::Shape(format!(
            "mixing vectors of length {} and {}",
            a.len(),
            b.len()
        )));
    }
    if !(0.0..=1.0).contains(&lambda) {
        return Err(Error::InvalidArgument(format!("lambda {lambda} outside [0, 1]")));
    }
    Ok(a.iter().zip(b).map(|(x, y)| mix_scalar(*x, *y, lambda)).collect())
}

/// Written so that swapping the operands together with `λ ↔ 1 − λ` gives
/// bit-identical results.
fn mix_scalar(a: f64, b: f64, lambda: f64) -> f64 {
    let mu = 1.0 - lambda;
    if lambda >= mu {
        lambda * a + (1.0 - lambda) * b
    } else {
        (1.0 - mu) * a + mu * b
    }
}

/// Confident predictions on unlabeled nodes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PseudoLabelSet {
    pub nodes: Vec<usize>,
    pub labels: Vec<usize>,
    pub confidences: Vec<f64>,
}

impl PseudoLabelSet {
    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Pseudo-label per node id, `None` outside the set.
    pub fn label_lookup(&self, num_nodes: usize) -> Vec<Option<usize>> {
        let mut out = vec![None; num_nodes];
        for (&n, &l) in self.nodes.iter().zip(&self.labels) {
            out[n] = Some(l);
        }
        out
    }
}

/// Unlabeled rows of `probs` whose maximum probability is `>= gamma`,
/// labeled by argmax (lowest class wins ties).
pub fn build_pseudo_labels(probs: &Matrix, labeled_ids: &[usize], gamma: f64) -> PseudoLabelSet {
    let mut is_labeled = vec![false; probs.rows()];
    for &i in labeled_ids {
        is_labeled[i] = true;
    }
    let mut out = PseudoLabelSet::default();
    for (i, &labeled) in is_labeled.iter().enumerate() {
        if labeled {
            continue;
        }
        let row = probs.row(i);
        let c = argmax(row);
        if row[c] >= gamma {
            out.nodes.push(i);
            out.labels.push(c);
            out.confidences.push(row[c]);
        }
    }
    out
}

/// Label matrix for the NLD: true one-hot rows for labeled nodes, predictions
/// elsewhere (one-hot argmax, or the full distribution when `soft`).
pub fn nld_label_matrix(probs: &Matrix, labeled_ids: &[usize], labeled_labels: &[usize], soft: bool) -> Matrix {
    let mut y = if soft {
        probs.clone()
    } else {
        let mut m = Matrix::zeros(probs.rows(), probs.cols());
        for (i, c) in probs.argmax_rows().into_iter().enumerate() {
            m[(i, c)] = 1.0;
        }
        m
    };
    for (&i, &l) in labeled_ids.iter().zip(labeled_labels) {
        y.row_mut(i).fill(0.0);
        y[(i, l)] = 1.0;
    }
    y
}

/// Neighborhood label distribution per node.
#[derive(Debug, Clone, PartialEq)]
pub struct NldTable {
    pub dist: Matrix,
}

impl NldTable {
    pub fn row(&self, i: usize) -> &[f64] {
        self.dist.row(i)
    }
}

/// `q_i = mean of ybar rows over the neighbors of i` in `a`. With
/// `include_self` the adjacency's self-loop counts as a neighbor; without it
/// self entries are skipped and isolated nodes get a zero row.
pub fn compute_nld(a: &CsrGraph, ybar: &Matrix, include_self: bool) -> Result<NldTable> {
    if ybar.rows() != a.num_nodes() {
        return Err(Error::Shape(format!(
            "{} label rows for {} nodes",
            ybar.rows(),
            a.num_nodes()
        )));
    }
    let mut dist = Matrix::zeros(ybar.rows(), ybar.cols());
    for i in 0..a.num_nodes() {
        let mut count = 0usize;
        let row = dist.row_mut(i);
        for &v in a.neighbors(i) {
            if v == i && !include_self {
                continue;
            }
            count += 1;
            for (q, &y) in row.iter_mut().zip(ybar.row(v)) {
                *q += y;
            }
        }
        if count > 0 {
            let inv = count as f64;
            for q in row.iter_mut() {
                *q /= inv;
            }
        }
    }
    Ok(NldTable { dist })
}

/// `q^{1/τ} / Σ_k q_k^{1/τ}`; an all-zero input stays zero.
pub fn sharpen(q: &[f64], tau: f64) -> Vec<f64> {
    let p = 1.0 / tau;
    let mut out: Vec<f64> = q.iter().map(|&v| if v > 0.0 { v.powf(p) } else { 0.0 }).collect();
    let s: f64 = out.iter().sum();
    if s > 0.0 {
        for v in &mut out {
            *v /= s;
        }
    }
    out
}

/// Cosine similarity of two non-negative vectors, clamped to `[0, 1]`.
pub fn nld_similarity(qa: &[f64], qb: &[f64]) -> Result<f64> {
    let na = dot(qa, qa).sqrt();
    let nb = dot(qb, qb).sqrt();
    if na == 0.0 || nb == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero vector".into()));
    }
    Ok((dot(qa, qb) / (na * nb)).clamp(0.0, 1.0))
}

/// `exp(±β_s·s) / (1 + β_d·d)`, `+` for a same-class candidate.
pub fn sampling_weight(same_class: bool, s: f64, degree: usize, beta_s: f64, beta_d: f64) -> f64 {
    let sign = if same_class { 1.0 } else { -1.0 };
    (sign * beta_s * s).exp() / (1.0 + beta_d * degree as f64)
}

/// Chosen partners for one refresh period.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairAssignment {
    pub intra: Vec<PairMix>,
    pub inter: Vec<PairMix>,
}

impl PairAssignment {
    pub fn is_empty(&self) -> bool {
        self.intra.is_empty() && self.inter.is_empty()
    }
}

/// Draws `λ ~ Beta(α, α)`. `α = 0` is the limit distribution: 0 or 1 with
/// equal probability.
pub fn sample_lambda(alpha: f64, rng: &mut Rng) -> Result<f64> {
    if alpha == 0.0 {
        return Ok(if rng.random::<bool>() { 1.0 } else { 0.0 });
    }
    let beta = Beta::new(alpha, alpha).map_err(|e| Error::InvalidArgument(format!("Beta({alpha}, {alpha}): {e}")))?;
    Ok(beta.sample(rng))
}

/// Per labeled node `i`, one same-class and one different-class partner from
/// `dpl`, drawn with probability proportional to [`sampling_weight`]. Nodes
/// whose candidate pool is empty skip that branch. Partner choices use
/// `pair_rng`; mixing ratios use `lambda_rng`.
#[allow(clippy::too_many_arguments)]
pub fn sample_pairs(
    labeled_ids: &[usize],
    labeled_labels: &[usize],
    dpl: &PseudoLabelSet,
    nld: &NldTable,
    cfg: &MixupConfig,
    degrees: &[usize],
    pair_rng: &mut Rng,
    lambda_rng: &mut Rng,
) -> Result<PairAssignment> {
    if labeled_ids.len() != labeled_labels.len() {
        return Err(Error::Shape("labeled ids and labels differ in length".into()));
    }
    let mut out = PairAssignment::default();
    if dpl.is_empty() {
        return Ok(out);
    }
    let sharp: Vec<Vec<f64>> = dpl.nodes.iter().map(|&j| sharpen(nld.row(j), cfg.tau)).collect();
    for (&i, &yi) in labeled_ids.iter().zip(labeled_labels) {
        let qi = sharpen(nld.row(i), cfg.tau);
        let mut same = (Vec::new(), Vec::new());
        let mut diff = (Vec::new(), Vec::new());
        for (k, &j) in dpl.nodes.iter().enumerate() {
            // Zero NLD rows only occur for isolated nodes with self-loops
            // excluded; they get neutral similarity.
            let s = nld_similarity(&qi, &sharp[k]).unwrap_or(0.0);
            let is_same = dpl.labels[k] == yi;
            let w = sampling_weight(is_same, s, degrees[j], cfg.beta_s, cfg.beta_d);
            let pool = if is_same { &mut same } else { &mut diff };
            pool.0.push(j);
            pool.1.push(w);
        }
        let mut pick = |pool: &(Vec<usize>, Vec<f64>)| -> Result<Option<usize>> {
            if pool.0.is_empty() {
                return Ok(None);
            }
            let dist = WeightedIndex::new(&pool.1).map_err(|e| Error::Degenerate(format!("sampling weights: {e}")))?;
            Ok(Some(pool.0[dist.sample(pair_rng)]))
        };
        let intra = pick(&same)?;
        let inter = pick(&diff)?;
        if let Some(j) = intra {
            out.intra.push(PairMix {
                target: i,
                partner: j,
                lambda: sample_lambda(cfg.alpha, lambda_rng)?,
            });
        }
        if let Some(j) = inter {
            out.inter.push(PairMix {
                target: i,
                partner: j,
                lambda: sample_lambda(cfg.alpha, lambda_rng)?,
            });
        }
    }
    Ok(out)
}

/// Same-class branch: full-graph inputs with labeled rows replaced.
#[derive(Debug, Clone)]
pub struct IntraBatch {
    /// `N × F` features; row `i` mixed for every target `i`.
    pub features: Matrix,
    /// Mixed labeled nodes, in pair order.
    pub rows: Vec<usize>,
    /// Soft labels for `rows`.
    pub soft_labels: Matrix,
    /// Mixed adjacency before normalization.
    pub adjacency: CsrGraph,
    /// `sym_normalize(adjacency)`.
    pub normalized: CsrGraph,
    pub lambdas: Vec<f64>,
}

/// Different-class branch: standalone rows fed through the identity
/// propagation.
#[derive(Debug, Clone)]
pub struct InterBatch {
    pub features: Matrix,
    pub soft_labels: Matrix,
    pub lambdas: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct MixupBatches {
    pub intra: Option<IntraBatch>,
    pub inter: Option<InterBatch>,
    pub pairs: PairAssignment,
}

fn one_hot(c: usize, classes: usize) -> Vec<f64> {
    let mut v = vec![0.0; classes];
    v[c] = 1.0;
    v
}

/// Checks every pair against the class rules and every soft label against
/// the simplex.
pub fn validate_batches(
    batches: &MixupBatches,
    labels: &[Option<usize>],
    dpl: &PseudoLabelSet,
    gamma: f64,
) -> Result<()> {
    let pseudo = dpl.label_lookup(labels.len());
    let conf: std::collections::HashMap<usize, f64> =
        dpl.nodes.iter().copied().zip(dpl.confidences.iter().copied()).collect();
    let check = |p: &PairMix, same: bool| -> Result<()> {
        let yi =
            labels[p.target].ok_or_else(|| Error::InvalidArgument(format!("target {} is not labeled", p.target)))?;
        if labels[p.partner].is_some() {
            return Err(Error::InvalidArgument(format!(
                "partner {} is a labeled node",
                p.partner
            )));
        }
        let yj = pseudo[p.partner]
            .ok_or_else(|| Error::InvalidArgument(format!("partner {} has no pseudo-label", p.partner)))?;
        if conf[&p.partner] < gamma {
            return Err(Error::InvalidArgument(format!(
                "partner {} below confidence threshold",
                p.partner
            )));
        }
        if (yi == yj) != same {
            return Err(Error::InvalidArgument(format!(
                "class-consistency violation: pair ({}, {}) has classes {yi}/{yj} in the {} branch",
                p.target,
                p.partner,
                if same { "intra" } else { "inter" }
            )));
        }
        Ok(())
    };
    for p in &batches.pairs.intra {
        check(p, true)?;
    }
    for p in &batches.pairs.inter {
        check(p, false)?;
    }
    let simplex = |m: &Matrix| {
        (0..m.rows()).all(|r| {
            let row = m.row(r);
            row.iter().all(|&v| v >= 0.0) && (row.iter().sum::<f64>() - 1.0).abs() <= 1e-12
        })
    };
    if batches.intra.as_ref().is_some_and(|b| !simplex(&b.soft_labels))
        || batches.inter.as_ref().is_some_and(|b| !simplex(&b.soft_labels))
    {
        return Err(Error::InvalidArgument("mixed label row off the simplex".into()));
    }
    Ok(())
}

/// Materializes the mixed inputs. `a` is the adjacency with self-loops,
/// before normalization; `labels` holds true labels for labeled nodes and
/// `None` elsewhere.
pub fn build_batches(
    features: &Matrix,
    labels: &[Option<usize>],
    num_classes: usize,
    dpl: &PseudoLabelSet,
    pairs: PairAssignment,
    a: &CsrGraph,
) -> Result<MixupBatches> {
    let pseudo = dpl.label_lookup(labels.len());
    let class_of = |p: &PairMix| -> Result<(usize, usize)> {
        let yi =
            labels[p.target].ok_or_else(|| Error::InvalidArgument(format!("target {} is not labeled", p.target)))?;
        let yj = pseudo[p.partner]
            .ok_or_else(|| Error::InvalidArgument(format!("partner {} has no pseudo-label", p.partner)))?;
        Ok((yi, yj))
    };

    let intra = if pairs.intra.is_empty() {
        None
    } else {
        let mut x = features.clone();
        let mut soft = Matrix::zeros(pairs.intra.len(), num_classes);
        let mut rows = Vec::with_capacity(pairs.intra.len());
        for (r, p) in pairs.intra.iter().enumerate() {
            let (yi, yj) = class_of(p)?;
            if yi != yj {
                return Err(Error::InvalidArgument(format!(
                    "class-consistency violation: intra pair ({}, {}) has classes {yi}/{yj}",
                    p.target, p.partner
                )));
            }
            let mixed = mix(features.row(p.target), features.row(p.partner), p.lambda)?;
            x.row_mut(p.target).copy_from_slice(&mixed);
            soft.row_mut(r)
                .copy_from_slice(&mix(&one_hot(yi, num_classes), &one_hot(yj, num_classes), p.lambda)?);
            rows.push(p.target);
        }
        let adjacency = mix_adjacency(a, &MixSelector::new(pairs.intra.clone())?)?;
        let normalized = sym_normalize(&adjacency)?;
        Some(IntraBatch {
            features: x,
            rows,
            soft_labels: soft,
            adjacency,
            normalized,
            lambdas: pairs.intra.iter().map(|p| p.lambda).collect(),
        })
    };

    let inter = if pairs.inter.is_empty() {
        None
    } else {
        let mut x = Matrix::zeros(pairs.inter.len(), features.cols());
        let mut soft = Matrix::zeros(pairs.inter.len(), num_classes);
        for (r, p) in pairs.inter.iter().enumerate() {
            let (yi, yj) = class_of(p)?;
            if yi == yj {
                return Err(Error::InvalidArgument(format!(
                    "class-consistency violation: inter pair ({}, {}) shares class {yi}",
                    p.target, p.partner
                )));
            }
            x.row_mut(r)
                .copy_from_slice(&mix(features.row(p.target), features.row(p.partner), p.lambda)?);
            soft.row_mut(r)
                .copy_from_slice(&mix(&one_hot(yi, num_classes), &one_hot(yj, num_classes), p.lambda)?);
        }
        Some(InterBatch {
            features: x,
            soft_labels: soft,
            lambdas: pairs.inter.iter().map(|p| p.lambda).collect(),
        })
    };

    Ok(MixupBatches { intra, inter, pairs })
}

/// The supervised inputs shared by every objective evaluation.
pub struct Supervision<'a> {
    pub features: &'a Matrix,
    /// Normalized adjacency with self-loops.
    pub a_hat: &'a CsrGraph,
    pub labeled: &'a [usize],
    /// One-hot rows for `labeled`.
    pub targets: &'a Matrix,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub gnn: f64,
    pub intra: f64,
    pub inter: f64,
}

/// Dropout streams, one per branch, so enabling a branch never perturbs the
/// masks another branch sees.
pub struct BranchRngs {
    pub gnn: Rng,
    pub intra: Rng,
    pub inter: Rng,
}

pub struct Objective {
    pub losses: LossBreakdown,
    pub grads: Gradients,
    /// ReLU activation pattern of every forward pass, for gradient checks.
    pub relu_pattern: Vec<bool>,
}

/// `L = L_GNN + λ_intra·L_intra + λ_inter·L_inter` and its gradient. Absent
/// batches contribute zero. `dropout = None` runs every branch in eval mode.
pub fn nodemixup_loss(
    params: &ModelParams,
    sup: &Supervision<'_>,
    batches: Option<&MixupBatches>,
    cfg: &MixupConfig,
    dropout: Option<(f64, &mut BranchRngs)>,
) -> Result<Objective> {
    let (rate, mut rngs) = match dropout {
        Some((r, rngs)) => (r, Some(rngs)),
        None => (0.0, None),
    };
    let mut relu_pattern = Vec::new();

    let (gnn, mut grads) = {
        let mode = match rngs.as_deref_mut() {
            Some(r) => Mode::Train {
                dropout: rate,
                rng: &mut r.gnn,
            },
            None => Mode::Eval,
        };
        let (logits, trace) = forward(sup.features, Propagation::Graph(sup.a_hat), params, mode)?;
        relu_pattern.extend(trace.relu_pattern());
        let (loss, d) = masked_cross_entropy(&logits, sup.labeled, sup.targets)?;
        (loss, backward(trace, params, &d)?)
    };

    let mut intra = 0.0;
    if let Some(b) = batches.and_then(|b| b.intra.as_ref()) {
        let mode = match rngs.as_deref_mut() {
            Some(r) => Mode::Train {
                dropout: rate,
                rng: &mut r.intra,
            },
            None => Mode::Eval,
        };
        let (logits, trace) = forward(&b.features, Propagation::Graph(&b.normalized), params, mode)?;
        relu_pattern.extend(trace.relu_pattern());
        let (loss, d) = masked_cross_entropy(&logits, &b.rows, &b.soft_labels)?;
        grads.add_scaled(&backward(trace, params, &d)?, cfg.lambda_intra);
        intra = loss;
    }

    let mut inter = 0.0;
    if let Some(b) = batches.and_then(|b| b.inter.as_ref()) {
        let mode = match rngs {
            Some(r) => Mode::Train {
                dropout: rate,
                rng: &mut r.inter,
            },
            None => Mode::Eval,
        };
        let (logits, trace) = forward(&b.features, Propagation::Identity, params, mode)?;
        relu_pattern.extend(trace.relu_pattern());
        let rows: Vec<usize> = (0..b.features.rows()).collect();
        let (loss, d) = masked_cross_entropy(&logits, &rows, &b.soft_labels)?;
        grads.add_scaled(&backward(trace, params, &d)?, cfg.lambda_inter);
        inter = loss;
    }

    let total = gnn + cfg.lambda_intra * intra + cfg.lambda_inter * inter;
    if !total.is_finite() {
        return Err(Error::NonFinite("total loss".into()));
    }
    Ok(Objective {
        losses: LossBreakdown {
            total,
            gnn,
            intra,
            inter,
        },
        grads,
        relu_pattern,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphalg::add_self_loops;
    use crate::rng::substream;

    #[test]
    fn mix_cases() {
        let a = [1.0, 0.0];
        let b = [0.0, 1.0];
        assert_eq!(mix(&a, &b, 1.0).unwrap(), a);
        assert_eq!(mix(&a, &b, 0.0).unwrap(), b);
        let m = mix(&a, &b, 0.3).unwrap();
        assert!((m[0] - 0.3).abs() < 1e-15 && (m[1] - 0.7).abs() < 1e-15);
        assert!(mix(&a, &[1.0], 0.5).is_err());
        assert!(mix(&a, &b, 1.1).is_err());
    }

    #[test]
    fn pseudo_label_rules() {
        let probs = Matrix::from_rows(&[vec![0.95, 0.05], vec![1.0, 0.0], vec![0.5, 0.5], vec![0.6, 0.4]]).unwrap();
        let d = build_pseudo_labels(&probs, &[1], 0.9);
        assert_eq!(d.nodes, vec![0]);
        assert_eq!(d.labels, vec![0]);

        let d = build_pseudo_labels(&probs, &[1], 0.5);
        assert_eq!(d.nodes, vec![0, 2, 3]);
        assert_eq!(d.labels, vec![0, 0, 0]);
        assert_eq!(d.confidences[1], 0.5);
    }

    #[test]
    fn nld_averages_neighbor_labels() {
        // Path 0-1-2 with self-loops; labels 0, 0, 1. Node 1 sees {0, 0, 1}.
        let a = add_self_loops(&CsrGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap());
        let y = Matrix::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]]).unwrap();
        let nld = compute_nld(&a, &y, true).unwrap();
        assert!((nld.row(1)[0] - 2.0 / 3.0).abs() < 1e-15);
        assert!((nld.row(1)[1] - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(nld.row(0), &[1.0, 0.0]);
        for i in 0..3 {
            assert!((nld.row(i).iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
        let no_self = compute_nld(&a, &y, false).unwrap();
        assert_eq!(no_self.row(0), &[1.0, 0.0]);
        assert_eq!(no_self.row(2), &[1.0, 0.0]);
    }

    #[test]
    fn sharpen_cases() {
        assert_eq!(sharpen(&[0.8, 0.2], 1.0), vec![0.8, 0.2]);
        let u = sharpen(&[0.25; 4], 0.3);
        assert!(u.iter().all(|&v| (v - 0.25).abs() < 1e-15));
        let s = sharpen(&[0.8, 0.2], 0.5);
        assert!((s[0] - 0.64 / 0.68).abs() < 1e-15);
        assert!((s[0] - 0.9412).abs() < 1e-4 && (s[1] - 0.0588).abs() < 1e-4);
        assert_eq!(sharpen(&[0.0, 1.0], 0.5), vec![0.0, 1.0]);
    }

    #[test]
    fn similarity_cases() {
        assert_eq!(nld_similarity(&[0.3, 0.7], &[0.3, 0.7]).unwrap(), 1.0);
        assert_eq!(nld_similarity(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let s = nld_similarity(&[1.0, 0.0], &[0.5, 0.5]).unwrap();
        assert!((s - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-15);
        assert!(nld_similarity(&[0.0, 0.0], &[1.0, 0.0]).is_err());
    }

    #[test]
    fn weight_cases() {
        let w = sampling_weight(true, 1.0, 1, 1.0, 1.0);
        assert!((w - std::f64::consts::E / 2.0).abs() < 1e-15);
        assert!((w - 1.3591).abs() < 1e-4);
        assert_eq!(sampling_weight(true, 0.0, 3, 2.0, 0.5), 1.0 / 2.5);
        assert_eq!(sampling_weight(false, 0.0, 3, 2.0, 0.5), 1.0 / 2.5);
        let ws: Vec<f64> = (0..5).map(|d| sampling_weight(false, 0.4, d, 1.0, 0.7)).collect();
        assert!(ws.windows(2).all(|p| p[1] < p[0]));
    }

    fn toy_nld(n: usize) -> NldTable {
        let mut m = Matrix::zeros(n, 2);
        for i in 0..n {
            m[(i, 0)] = 1.0;
        }
        NldTable { dist: m }
    }

    #[test]
    fn empty_pool_gives_no_pairs() {
        let cfg = MixupConfig::default();
        let p = sample_pairs(
            &[0],
            &[0],
            &PseudoLabelSet::default(),
            &toy_nld(3),
            &cfg,
            &[1, 1, 1],
            &mut substream(1, "p"),
            &mut substream(1, "l"),
        )
        .unwrap();
        assert!(p.is_empty());
    }

    #[test]
    fn single_candidates_are_always_chosen() {
        let cfg = MixupConfig::default();
        let dpl = PseudoLabelSet {
            nodes: vec![1, 2],
            labels: vec![0, 1],
            confidences: vec![0.9, 0.9],
        };
        for seed in 0..20 {
            let p = sample_pairs(
                &[0],
                &[0],
                &dpl,
                &toy_nld(3),
                &cfg,
                &[1, 1, 1],
                &mut substream(seed, "p"),
                &mut substream(seed, "l"),
            )
            .unwrap();
            assert_eq!(p.intra[0].partner, 1);
            assert_eq!(p.inter[0].partner, 2);
            assert!((0.0..=1.0).contains(&p.intra[0].lambda));
        }
    }

    #[test]
    fn alpha_zero_gives_binary_lambdas() {
        let mut r = substream(0, "l");
        let draws: Vec<f64> = (0..200).map(|_| sample_lambda(0.0, &mut r).unwrap()).collect();
        assert!(draws.iter().all(|&l| l == 0.0 || l == 1.0));
        assert!(draws.contains(&0.0) && draws.contains(&1.0));
    }

    fn path_fixture() -> (Matrix, Vec<Option<usize>>, PseudoLabelSet, CsrGraph) {
        let x = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![2.0, 2.0]]).unwrap();
        let labels = vec![Some(0), None, None];
        let dpl = PseudoLabelSet {
            nodes: vec![1, 2],
            labels: vec![1, 0],
            confidences: vec![0.8, 0.9],
        };
        let a = add_self_loops(&CsrGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap());
        (x, labels, dpl, a)
    }

    #[test]
    fn path_batch_matches_hand_oracle() {
        let (x, labels, dpl, a) = path_fixture();
        let pairs = PairAssignment {
            intra: vec![PairMix {
                target: 0,
                partner: 2,
                lambda: 0.5,
            }],
            inter: vec![PairMix {
                target: 0,
                partner: 1,
                lambda: 0.25,
            }],
        };
        let b = build_batches(&x, &labels, 2, &dpl, pairs, &a).unwrap();
        validate_batches(&b, &labels, &dpl, 0.7).unwrap();
        let intra = b.intra.as_ref().unwrap();
        assert_eq!(intra.features.row(0), &[1.5, 1.0]);
        assert_eq!(intra.features.row(1), x.row(1));
        assert_eq!(intra.soft_labels.row(0), &[1.0, 0.0]);
        let expected = [[0.5, 1.0, 0.5], [1.0, 1.0, 1.0], [0.5, 1.0, 1.0]];
        let dense = intra.adjacency.to_dense();
        for i in 0..3 {
            for j in 0..3 {
                assert!((dense[(i, j)] - expected[i][j]).abs() < 1e-15);
            }
        }
        let inter = b.inter.as_ref().unwrap();
        assert_eq!(inter.features.row(0), &[0.25, 0.75]);
        assert_eq!(inter.soft_labels.row(0), &[0.25, 0.75]);
    }

    #[test]
    fn class_violations_are_rejected() {
        let (x, labels, dpl, a) = path_fixture();
        let wrong_intra = PairAssignment {
            intra: vec![PairMix {
                target: 0,
                partner: 1,
                lambda: 0.5,
            }],
            inter: vec![],
        };
        assert!(build_batches(&x, &labels, 2, &dpl, wrong_intra, &a).is_err());
        let wrong_inter = PairAssignment {
            intra: vec![],
            inter: vec![PairMix {
                target: 0,
                partner: 2,
                lambda: 0.5,
            }],
        };
        assert!(build_batches(&x, &labels, 2, &dpl, wrong_inter, &a).is_err());
    }

    #[test]
    fn identical_rows_are_unchanged_by_mixing() {
        let (mut x, labels, dpl, a) = path_fixture();
        let r2 = x.row(2).to_vec();
        x.row_mut(0).copy_from_slice(&r2);
        for lambda in [0.0, 0.3, 0.9] {
            let pairs = PairAssignment {
                intra: vec![PairMix {
                    target: 0,
                    partner: 2,
                    lambda,
                }],
                inter: vec![],
            };
            let b = build_batches(&x, &labels, 2, &dpl, pairs, &a).unwrap();
            assert_eq!(b.intra.unwrap().features.row(0), x.row(0));
        }
    }

    #[test]
    fn config_validation() {
        assert!(MixupConfig::default().validate().is_ok());
        let zero = MixupConfig {
            lambda_intra: 0.0,
            lambda_inter: 0.0,
            ..MixupConfig::default()
        };
        assert!(zero.validate().is_ok());
        for bad in [
            MixupConfig {
                gamma: 0.0,
                ..MixupConfig::default()
            },
            MixupConfig {
                tau: 1.5,
                ..MixupConfig::default()
            },
            MixupConfig {
                beta_s: 0.0,
                ..MixupConfig::default()
            },
            MixupConfig {
                refresh_every: 0,
                ..MixupConfig::default()
            },
            MixupConfig {
                alpha: -1.0,
                ..MixupConfig::default()
            },
        ] {
            assert!(bad.validate().is_err());
        }
    }
}
