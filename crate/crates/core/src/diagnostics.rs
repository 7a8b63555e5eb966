//! Under-reaching diagnostics: reaching coefficient, RC buckets, CKA between
//! labeled and unlabeled representations, shortest-path-by-degree tables and
//! correlation helpers.
//!
//! Distances to labeled nodes that are unreachable are counted as the graph
//! diameter throughout, so disconnected nodes get the weakest possible
//! reachability rather than being dropped.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::index::sample;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphalg::{add_self_loops, bfs_from, diameter_and_components, sym_normalize, CsrGraph, UNREACHABLE};
use crate::graphio::Dataset;
use crate::matrix::Matrix;
use crate::nn::{forward, Mode, ModelParams, Propagation};
use crate::rng::{substream, CKA_SAMPLE};

pub const NUM_BUCKETS: usize = 5;
pub const BUCKET_NAMES: [&str; NUM_BUCKETS] = ["I", "II", "III", "IV", "V"];

/// Hop distances from every labeled node, with unreachable pairs set to the
/// diameter.
struct LabeledDistances {
    diameter: u32,
    /// `rows[j][i]`: distance from the j-th labeled node to node `i`.
    rows: Vec<Vec<u32>>,
    is_labeled: Vec<bool>,
}

impl LabeledDistances {
    fn compute(g: &CsrGraph, labeled_ids: &[usize]) -> Result<Self> {
        if labeled_ids.is_empty() {
            return Err(Error::InvalidArgument("labeled set is empty".into()));
        }
        let n = g.num_nodes();
        let mut is_labeled = vec![false; n];
        for &j in labeled_ids {
            if j >= n {
                return Err(Error::InvalidArgument(format!("labeled node {j} out of range")));
            }
            is_labeled[j] = true;
        }
        let sources: Vec<usize> = (0..n).filter(|&j| is_labeled[j]).collect();
        let diameter = diameter_and_components(g).diameter;
        let rows = sources
            .par_iter()
            .map(|&j| {
                // Beyond-diameter values only appear when the diameter is an
                // estimate on very large graphs; they are capped as well.
                bfs_from(g, j)
                    .into_iter()
                    .map(|d| if d == UNREACHABLE { diameter } else { d.min(diameter) })
                    .collect()
            })
            .collect();
        Ok(Self {
            diameter,
            rows,
            is_labeled,
        })
    }

    fn unlabeled(&self) -> Vec<usize> {
        (0..self.is_labeled.len()).filter(|&i| !self.is_labeled[i]).collect()
    }
}

/// Reaching coefficient for every unlabeled node.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcReport {
    pub diameter: u32,
    /// Unlabeled node ids, ascending.
    pub nodes: Vec<usize>,
    pub rc: Vec<f64>,
    pub min_distance: Vec<u32>,
    pub mean_distance: Vec<f64>,
}

impl RcReport {
    pub fn max_rc(&self) -> f64 {
        self.rc.iter().copied().fold(0.0, f64::max)
    }

    pub fn to_tsv(&self) -> String {
        let mut out = String::from("node\trc\tmin_distance\tmean_distance\n");
        for k in 0..self.nodes.len() {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}",
                self.nodes[k], self.rc[k], self.min_distance[k], self.mean_distance[k]
            );
        }
        out
    }
}

/// `RC_i = mean over labeled j of (1 − ln d(i,j) / ln D_G)`.
pub fn reaching_coefficient(g: &CsrGraph, labeled_ids: &[usize]) -> Result<RcReport> {
    let table = LabeledDistances::compute(g, labeled_ids)?;
    if table.diameter < 2 {
        return Err(Error::Degenerate(format!(
            "diameter {} < 2 makes ln(diameter) unusable as a normalizer",
            table.diameter
        )));
    }
    let log_diameter = f64::from(table.diameter).ln();
    let nodes = table.unlabeled();
    let count = table.rows.len() as f64;
    let mut rc = Vec::with_capacity(nodes.len());
    let mut min_distance = Vec::with_capacity(nodes.len());
    let mut mean_distance = Vec::with_capacity(nodes.len());
    for &i in &nodes {
        let mut acc = 0.0;
        let mut dsum = 0.0;
        let mut dmin = u32::MAX;
        for row in &table.rows {
            let d = row[i];
            acc += 1.0 - f64::from(d).ln() / log_diameter;
            dsum += f64::from(d);
            dmin = dmin.min(d);
        }
        rc.push(acc / count);
        mean_distance.push(dsum / count);
        min_distance.push(dmin);
    }
    Ok(RcReport {
        diameter: table.diameter,
        nodes,
        rc,
        min_distance,
        mean_distance,
    })
}

/// Unlabeled nodes partitioned into five equal-width RC ranges
/// `[0, m/5], (m/5, 2m/5], …, (4m/5, m]` with `m` the largest RC.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RcBuckets {
    pub max_rc: f64,
    pub members: [Vec<usize>; NUM_BUCKETS],
}

pub fn rc_buckets(report: &RcReport) -> RcBuckets {
    let m = report.max_rc();
    let mut members: [Vec<usize>; NUM_BUCKETS] = Default::default();
    for (&node, &v) in report.nodes.iter().zip(&report.rc) {
        let k = if m <= 0.0 {
            0
        } else {
            (0..NUM_BUCKETS - 1)
                .find(|&k| v <= (k + 1) as f64 * m / NUM_BUCKETS as f64)
                .unwrap_or(NUM_BUCKETS - 1)
        };
        members[k].push(node);
    }
    RcBuckets { max_rc: m, members }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CkaVariant {
    /// `‖Zuᵀ Zl‖²_F / (‖Zlᵀ Zl‖_F ‖Zuᵀ Zu‖_F)`.
    #[default]
    Linear,
    /// `‖Zuᵀ Zl‖_F / (‖Zl Zlᵀ‖_F ‖Zu Zuᵀ‖_F)`; not scale invariant and not 1
    /// on identical inputs, kept for comparison only.
    Printed,
}

fn centered(z: &Matrix, what: &str) -> Result<Matrix> {
    let mut c = z.clone();
    c.center_columns();
    if c.frobenius_norm() == 0.0 {
        return Err(Error::Degenerate(format!("{what} has zero variance after centering")));
    }
    Ok(c)
}

fn cka_inputs(zl: &Matrix, zu: &Matrix) -> Result<(Matrix, Matrix)> {
    if zl.rows() != zu.rows() {
        return Err(Error::Shape(format!(
            "CKA inputs have {} and {} rows",
            zl.rows(),
            zu.rows()
        )));
    }
    if zl.rows() < 2 {
        return Err(Error::InvalidArgument("CKA needs at least two rows".into()));
    }
    Ok((centered(zl, "first CKA input")?, centered(zu, "second CKA input")?))
}

/// Linear CKA with column centering.
pub fn cka(zl: &Matrix, zu: &Matrix) -> Result<f64> {
    let (l, u) = cka_inputs(zl, zu)?;
    let cross = u.t_matmul(&l)?.frobenius_norm();
    let denom = l.t_matmul(&l)?.frobenius_norm() * u.t_matmul(&u)?.frobenius_norm();
    Ok((cross * cross / denom).clamp(0.0, 1.0))
}

pub fn cka_printed(zl: &Matrix, zu: &Matrix) -> Result<f64> {
    let (l, u) = cka_inputs(zl, zu)?;
    let cross = u.t_matmul(&l)?.frobenius_norm();
    let denom = l.matmul_t(&l)?.frobenius_norm() * u.matmul_t(&u)?.frobenius_norm();
    Ok(cross / denom)
}

pub fn cka_with(variant: CkaVariant, zl: &Matrix, zu: &Matrix) -> Result<f64> {
    match variant {
        CkaVariant::Linear => cka(zl, zu),
        CkaVariant::Printed => cka_printed(zl, zu),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CkaEntry {
    pub value: f64,
    pub sample_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CkaReport {
    pub seed: u64,
    pub variant: CkaVariant,
    /// `None` when the bucket has fewer than two nodes.
    pub buckets: [Option<CkaEntry>; NUM_BUCKETS],
    pub bucket_sizes: [usize; NUM_BUCKETS],
}

impl CkaReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("bucket\tsize\tsample_size\tcka\n");
        for (k, name) in BUCKET_NAMES.iter().enumerate() {
            match self.buckets[k] {
                Some(e) => {
                    let _ = writeln!(
                        out,
                        "{}\t{}\t{}\t{}",
                        name, self.bucket_sizes[k], e.sample_size, e.value
                    );
                }
                None => {
                    let _ = writeln!(out, "{}\t{}\t0\tNA", name, self.bucket_sizes[k]);
                }
            }
        }
        out
    }
}

/// Final-layer pre-softmax output of the GCN in eval mode, one row per node.
pub fn representations(dataset: &Dataset, params: &ModelParams) -> Result<Matrix> {
    let a_hat = sym_normalize(&add_self_loops(&dataset.graph()))?;
    let (logits, _) = forward(dataset.features(), Propagation::Graph(&a_hat), params, Mode::Eval)?;
    Ok(logits)
}

/// CKA between labeled rows and each bucket's rows of `reps`, using
/// `min(|labeled|, |bucket|)` nodes drawn without replacement from each side.
pub fn cka_by_bucket(
    reps: &Matrix,
    labeled_ids: &[usize],
    buckets: &RcBuckets,
    seed: u64,
    variant: CkaVariant,
) -> Result<CkaReport> {
    if labeled_ids.is_empty() {
        return Err(Error::InvalidArgument("labeled set is empty".into()));
    }
    let mut rng = substream(seed, CKA_SAMPLE);
    let mut out: [Option<CkaEntry>; NUM_BUCKETS] = [None; NUM_BUCKETS];
    for (k, bucket) in buckets.members.iter().enumerate() {
        let m = labeled_ids.len().min(bucket.len());
        if m < 2 {
            continue;
        }
        let pick = |ids: &[usize], rng: &mut crate::rng::Rng| -> Vec<usize> {
            sample(rng, ids.len(), m).into_iter().map(|i| ids[i]).collect()
        };
        let l = pick(labeled_ids, &mut rng);
        let u = pick(bucket, &mut rng);
        let value = cka_with(variant, &reps.select_rows(&l), &reps.select_rows(&u))?;
        out[k] = Some(CkaEntry { value, sample_size: m });
    }
    Ok(CkaReport {
        seed,
        variant,
        buckets: out,
        bucket_sizes: std::array::from_fn(|k| buckets.members[k].len()),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSpRow {
    pub degree: usize,
    pub count: usize,
    pub mean_avg_sp: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeSpReport {
    pub diameter: u32,
    pub rows: Vec<DegreeSpRow>,
    /// `(node, structural degree, mean distance to labeled nodes)` for every
    /// unlabeled node.
    pub per_node: Vec<(usize, usize, f64)>,
}

impl DegreeSpReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("degree\tcount\tavg_sp\n");
        for r in &self.rows {
            let _ = writeln!(out, "{}\t{}\t{}", r.degree, r.count, r.mean_avg_sp);
        }
        out
    }

    /// Spearman correlation between degree and average shortest path over
    /// unlabeled nodes.
    pub fn degree_spearman(&self) -> Result<f64> {
        let d: Vec<f64> = self.per_node.iter().map(|p| p.1 as f64).collect();
        let s: Vec<f64> = self.per_node.iter().map(|p| p.2).collect();
        spearman(&d, &s)
    }
}

/// Mean hop distance from each unlabeled node to all labeled nodes, averaged
/// within structural-degree groups.
pub fn avg_sp_by_degree(g: &CsrGraph, labeled_ids: &[usize]) -> Result<DegreeSpReport> {
    let table = LabeledDistances::compute(g, labeled_ids)?;
    let count = table.rows.len() as f64;
    let mut per_node = Vec::new();
    let mut groups: BTreeMap<usize, (usize, f64)> = BTreeMap::new();
    for i in table.unlabeled() {
        let avg = table.rows.iter().map(|r| f64::from(r[i])).sum::<f64>() / count;
        let deg = g.structural_degree(i);
        per_node.push((i, deg, avg));
        let e = groups.entry(deg).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += avg;
    }
    let rows = groups
        .into_iter()
        .map(|(degree, (count, sum))| DegreeSpRow {
            degree,
            count,
            mean_avg_sp: sum / count as f64,
        })
        .collect();
    Ok(DegreeSpReport {
        diameter: table.diameter,
        rows,
        per_node,
    })
}

/// Pearson correlation; zero variance in either series is an error.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("series of length {} and {}", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::InvalidArgument("correlation needs at least two points".into()));
    }
    // Checked on the raw values: rounding in the mean can leave a constant
    // series with a tiny nonzero variance.
    let constant = |v: &[f64]| v.iter().all(|&a| a == v[0]);
    if constant(x) || constant(y) {
        return Err(Error::Degenerate("correlation of a constant series".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Degenerate("correlation of a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ranks starting at 1; ties share their average rank.
pub fn average_ranks(x: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| x[a].total_cmp(&x[b]));
    let mut ranks = vec![0.0; x.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && x[order[end]] == x[order[start]] {
            end += 1;
        }
        let rank = (start + end + 1) as f64 / 2.0;
        for &i in &order[start..end] {
            ranks[i] = rank;
        }
        start = end;
    }
    ranks
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("series of length {} and {}", x.len(), y.len())));
    }
    pearson(&average_ranks(x), &average_ranks(y))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PearsonReport {
    pub r: f64,
    /// `(node, rc, true-class probability)`.
    pub pairs: Vec<(usize, f64, f64)>,
}

impl PearsonReport {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("node\trc\tscore\n");
        for (n, rc, s) in &self.pairs {
            let _ = writeln!(out, "{n}\t{rc}\t{s}");
        }
        out
    }
}

/// Pearson correlation between RC and the probability the model assigns to
/// each unlabeled node's true class. `probs` holds softmax rows for every node.
pub fn pearson_rc_vs_score(probs: &Matrix, labels: &[usize], rc: &RcReport) -> Result<PearsonReport> {
    if rc.nodes.len() < 3 {
        return Err(Error::InvalidArgument(format!(
            "need at least 3 unlabeled nodes, got {}",
            rc.nodes.len()
        )));
    }
    if probs.rows() != labels.len() {
        return Err(Error::Shape(format!(
            "{} probability rows for {} labels",
            probs.rows(),
            labels.len()
        )));
    }
    let pairs: Vec<(usize, f64, f64)> = rc
        .nodes
        .iter()
        .zip(&rc.rc)
        .map(|(&i, &v)| (i, v, probs[(i, labels[i])]))
        .collect();
    let x: Vec<f64> = pairs.iter().map(|p| p.1).collect();
    let y: Vec<f64> = pairs.iter().map(|p| p.2).collect();
    Ok(PearsonReport {
        r: pearson(&x, &y)?,
        pairs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> CsrGraph {
        let edges: Vec<_> = (1..n).map(|i| (i - 1, i)).collect();
        CsrGraph::from_edges(n, &edges).unwrap()
    }

    #[test]
    fn rc_on_a_path() {
        let r = reaching_coefficient(&path(3), &[0]).unwrap();
        assert_eq!(r.diameter, 2);
        assert_eq!(r.nodes, vec![1, 2]);
        assert_eq!(r.rc, vec![1.0, 0.0]);
        assert_eq!(r.min_distance, vec![1, 2]);
    }

    #[test]
    fn rc_other_component_contributes_zero() {
        // Path 0-1-2 plus isolated edge 3-4, labeled {0}. Node 3 is cut off.
        let g = CsrGraph::from_edges(5, &[(0, 1), (1, 2), (3, 4)]).unwrap();
        let r = reaching_coefficient(&g, &[0]).unwrap();
        assert_eq!(r.rc[2], 0.0);
        assert_eq!(r.rc[3], 0.0);
        assert_eq!(r.min_distance[2], 2);
    }

    #[test]
    fn rc_errors() {
        assert!(reaching_coefficient(&path(2), &[0]).is_err());
        assert!(reaching_coefficient(&path(3), &[]).is_err());
    }

    fn report(rc: Vec<f64>) -> RcReport {
        let n = rc.len();
        RcReport {
            diameter: 2,
            nodes: (0..n).collect(),
            rc,
            min_distance: vec![1; n],
            mean_distance: vec![1.0; n],
        }
    }

    #[test]
    fn bucket_boundaries() {
        let m = 0.8;
        let b = rc_buckets(&report(vec![0.0, m / 5.0, m]));
        assert_eq!(b.members[0], vec![0, 1]);
        assert_eq!(b.members[4], vec![2]);

        let b = rc_buckets(&report(vec![0.3; 4]));
        assert_eq!(b.members[4].len(), 4);

        let b = rc_buckets(&report(vec![0.0; 3]));
        assert_eq!(b.members[0].len(), 3);
    }

    #[test]
    fn cka_self_similarity_and_invariances() {
        let z = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0], vec![-2.0, 1.5]]).unwrap();
        assert!((cka(&z, &z).unwrap() - 1.0).abs() < 1e-12);
        let mut scaled = z.clone();
        scaled.scale(-3.5);
        assert!((cka(&z, &scaled).unwrap() - 1.0).abs() < 1e-12);
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        let q = Matrix::from_rows(&[vec![c, -s], vec![s, c]]).unwrap();
        assert!((cka(&z, &z.matmul(&q).unwrap()).unwrap() - 1.0).abs() < 1e-12);
        let flat = Matrix::from_rows(&[vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0], vec![1.0, 1.0]]).unwrap();
        assert!(cka(&z, &flat).is_err());
        assert!(cka(&z, &Matrix::zeros(3, 2)).is_err());
    }

    #[test]
    fn printed_variant_is_not_normalized() {
        let z = Matrix::from_rows(&[vec![1.0, 2.0], vec![0.5, -1.0], vec![3.0, 0.0]]).unwrap();
        let mut big = z.clone();
        big.scale(10.0);
        let a = cka_printed(&z, &z).unwrap();
        let b = cka_printed(&big, &big).unwrap();
        assert!((a - 1.0).abs() > 1e-3 || (b - 1.0).abs() > 1e-3);
    }

    #[test]
    fn cka_by_bucket_marks_small_buckets_absent() {
        let reps = Matrix::from_rows(&[
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![2.0, 1.0],
            vec![1.0, 3.0],
            vec![0.5, 0.5],
        ])
        .unwrap();
        let mut members: [Vec<usize>; NUM_BUCKETS] = Default::default();
        members[0] = vec![0, 1];
        members[2] = vec![4];
        let buckets = RcBuckets { max_rc: 1.0, members };
        let r = cka_by_bucket(&reps, &[0, 1], &buckets, 7, CkaVariant::Linear).unwrap();
        assert!(r.buckets[1].is_none() && r.buckets[2].is_none());
        // Bucket I holds the labeled rows themselves, possibly reordered.
        let e = r.buckets[0].unwrap();
        assert_eq!(e.sample_size, 2);
        assert!(r.to_tsv().contains("III\t1\t0\tNA"));
    }

    #[test]
    fn avg_sp_examples() {
        let star = CsrGraph::from_edges(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]).unwrap();
        let r = avg_sp_by_degree(&star, &[0]).unwrap();
        assert_eq!(
            r.rows,
            vec![DegreeSpRow {
                degree: 1,
                count: 4,
                mean_avg_sp: 1.0
            }]
        );

        let r = avg_sp_by_degree(&path(3), &[0]).unwrap();
        assert_eq!(
            r.rows[0],
            DegreeSpRow {
                degree: 1,
                count: 1,
                mean_avg_sp: 2.0
            }
        );
        assert_eq!(
            r.rows[1],
            DegreeSpRow {
                degree: 2,
                count: 1,
                mean_avg_sp: 1.0
            }
        );
    }

    #[test]
    fn correlation_cases() {
        let x = [0.1, 0.4, 0.2, 0.9];
        let y: Vec<f64> = x.iter().map(|v| 3.0 * v - 1.0).collect();
        assert!((pearson(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!(pearson(&x, &[0.5; 4]).is_err());
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
        let r = spearman(&[1.0, 2.0, 3.0, 4.0], &[10.0, 9.0, 1.0, 0.0]).unwrap();
        assert!((r + 1.0).abs() < 1e-12);
    }

    #[test]
    fn pearson_rc_vs_score_cases() {
        let rc = report(vec![0.1, 0.5, 0.9]);
        let probs = Matrix::from_rows(&[vec![0.2, 0.8], vec![0.6, 0.4], vec![0.0, 1.0]]).unwrap();
        let out = pearson_rc_vs_score(&probs, &[0, 0, 1], &rc).unwrap();
        assert!((out.r - 1.0).abs() < 1e-12);
        let flat = Matrix::from_rows(&[vec![0.5, 0.5], vec![0.5, 0.5], vec![0.5, 0.5]]).unwrap();
        assert!(pearson_rc_vs_score(&flat, &[0, 0, 1], &rc).is_err());
    }
}
