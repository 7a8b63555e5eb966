//! Graph structure: symmetric CSR adjacency, self-loops, GCN normalization,
//! BFS distances, components/diameter and the pair-mixing operator used by
//! intra-class mixup.

use std::collections::VecDeque;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Hop distance reported for nodes no source can reach.
pub const UNREACHABLE: u32 = u32::MAX;

/// Above this node count the diameter falls back to a double-sweep bound.
pub const EXACT_DIAMETER_LIMIT: usize = 20_000;

/// Symmetric weighted adjacency in compressed sparse row form.
///
/// Columns are sorted within each row and every stored weight is positive.
/// Entry `(i, j)` is present exactly when `(j, i)` is, with the same weight.
#[derive(Debug, Clone, PartialEq)]
pub struct CsrGraph {
    offsets: Vec<usize>,
    cols: Vec<usize>,
    weights: Vec<f64>,
}

impl CsrGraph {
    /// Unit-weight graph from undirected edges. Both orientations and
    /// repeated pairs collapse to one symmetric entry.
    pub fn from_edges(num_nodes: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut triplets = Vec::with_capacity(edges.len() * 2);
        for &(u, v) in edges {
            triplets.push((u, v, 1.0));
            if u != v {
                triplets.push((v, u, 1.0));
            }
        }
        triplets.sort_by_key(|t| (t.0, t.1));
        triplets.dedup_by(|a, b| a.0 == b.0 && a.1 == b.1);
        Self::from_sorted_triplets(num_nodes, &triplets)
    }

    /// Builds from `(row, col, weight)` triplets already sorted by
    /// `(row, col)` without duplicates, then validates every invariant.
    pub fn from_sorted_triplets(num_nodes: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut offsets = vec![0usize; num_nodes + 1];
        let mut cols = Vec::with_capacity(triplets.len());
        let mut weights = Vec::with_capacity(triplets.len());
        for &(r, c, w) in triplets {
            if r >= num_nodes || c >= num_nodes {
                return Err(Error::Graph(format!(
                    "entry ({r}, {c}) outside a graph of {num_nodes} nodes"
                )));
            }
            offsets[r + 1] += 1;
            cols.push(c);
            weights.push(w);
        }
        for i in 0..num_nodes {
            offsets[i + 1] += offsets[i];
        }
        let g = Self { offsets, cols, weights };
        g.validate()?;
        Ok(g)
    }

    /// Dense square matrix to CSR; zero entries are dropped.
    pub fn from_dense(m: &Matrix) -> Result<Self> {
        if m.rows() != m.cols() {
            return Err(Error::Shape(format!("adjacency must be square, got {:?}", m.shape())));
        }
        let mut triplets = Vec::new();
        for i in 0..m.rows() {
            for (j, &w) in m.row(i).iter().enumerate() {
                if w != 0.0 {
                    triplets.push((i, j, w));
                }
            }
        }
        Self::from_sorted_triplets(m.rows(), &triplets)
    }

    fn validate(&self) -> Result<()> {
        let n = self.num_nodes();
        for i in 0..n {
            let cols = self.neighbors(i);
            if cols.windows(2).any(|w| w[0] >= w[1]) {
                return Err(Error::Graph(format!("row {i} has unsorted or repeated columns")));
            }
            for (&j, &w) in cols.iter().zip(self.row_weights(i)) {
                if !(w > 0.0 && w.is_finite()) {
                    return Err(Error::Graph(format!("entry ({i}, {j}) has weight {w}")));
                }
                if self.weight(j, i) != Some(w) {
                    return Err(Error::Graph(format!("entry ({i}, {j}) has no symmetric twin")));
                }
            }
        }
        Ok(())
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    /// Number of stored entries (each undirected edge counts twice, a
    /// self-loop once).
    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.cols[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn row_weights(&self, i: usize) -> &[f64] {
        &self.weights[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        let cols = self.neighbors(i);
        cols.binary_search(&j).ok().map(|k| self.row_weights(i)[k])
    }

    pub fn has_self_loop(&self, i: usize) -> bool {
        self.neighbors(i).binary_search(&i).is_ok()
    }

    /// Number of distinct neighbors other than the node itself.
    pub fn structural_degree(&self, i: usize) -> usize {
        let n = self.neighbors(i).len();
        if self.has_self_loop(i) {
            n - 1
        } else {
            n
        }
    }

    pub fn structural_degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|i| self.structural_degree(i)).collect()
    }

    pub fn weighted_degrees(&self) -> Vec<f64> {
        (0..self.num_nodes())
            .map(|i| self.row_weights(i).iter().sum())
            .collect()
    }

    pub fn is_identity(&self) -> bool {
        (0..self.num_nodes()).all(|i| self.neighbors(i) == [i] && self.row_weights(i) == [1.0])
    }

    pub fn to_dense(&self) -> Matrix {
        let n = self.num_nodes();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n {
            for (&j, &w) in self.neighbors(i).iter().zip(self.row_weights(i)) {
                m[(i, j)] = w;
            }
        }
        m
    }

    /// `self · x`, accumulating each output row in column order.
    pub fn matmul_dense(&self, x: &Matrix) -> Result<Matrix> {
        if x.rows() != self.num_nodes() {
            return Err(Error::Shape(format!(
                "propagating {} rows over a graph of {} nodes",
                x.rows(),
                self.num_nodes()
            )));
        }
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..self.num_nodes() {
            let out_row = out.row_mut(i);
            for (&j, &w) in self.neighbors(i).iter().zip(self.row_weights(i)) {
                for (o, &v) in out_row.iter_mut().zip(x.row(j)) {
                    *o += w * v;
                }
            }
        }
        Ok(out)
    }
}

/// Adds a unit self-loop to every node lacking one. Existing self-loops are
/// kept as they are, so the operation is idempotent.
pub fn add_self_loops(g: &CsrGraph) -> CsrGraph {
    let n = g.num_nodes();
    let mut offsets = Vec::with_capacity(n + 1);
    let mut cols = Vec::with_capacity(g.nnz() + n);
    let mut weights = Vec::with_capacity(g.nnz() + n);
    offsets.push(0);
    for i in 0..n {
        let mut inserted = g.has_self_loop(i);
        for (&j, &w) in g.neighbors(i).iter().zip(g.row_weights(i)) {
            if !inserted && j > i {
                cols.push(i);
                weights.push(1.0);
                inserted = true;
            }
            cols.push(j);
            weights.push(w);
        }
        if !inserted {
            cols.push(i);
            weights.push(1.0);
        }
        offsets.push(cols.len());
    }
    CsrGraph { offsets, cols, weights }
}

/// `D^{-1/2} A D^{-1/2}` with weighted degrees.
pub fn sym_normalize(g: &CsrGraph) -> Result<CsrGraph> {
    let deg = g.weighted_degrees();
    if let Some(i) = deg.iter().position(|&d| d <= 0.0) {
        return Err(Error::Graph(format!("node {i} has zero degree; add self-loops first")));
    }
    let inv_sqrt: Vec<f64> = deg.iter().map(|d| 1.0 / d.sqrt()).collect();
    let mut out = g.clone();
    for i in 0..g.num_nodes() {
        for k in g.offsets[i]..g.offsets[i + 1] {
            let j = g.cols[k];
            // Same product order for (i, j) and (j, i) keeps the result exactly symmetric.
            let (a, b) = if i <= j { (i, j) } else { (j, i) };
            out.weights[k] = g.weights[k] * inv_sqrt[a] * inv_sqrt[b];
        }
    }
    Ok(out)
}

pub fn identity_adjacency(n: usize) -> Result<CsrGraph> {
    if n == 0 {
        return Err(Error::InvalidArgument("identity adjacency needs n >= 1".into()));
    }
    Ok(CsrGraph {
        offsets: (0..=n).collect(),
        cols: (0..n).collect(),
        weights: vec![1.0; n],
    })
}

/// Multi-source BFS hop distance to the nearest source. Self-loops never
/// shorten a path; unreachable nodes get [`UNREACHABLE`].
pub fn bfs_distances(g: &CsrGraph, sources: &[usize]) -> Result<Vec<u32>> {
    if sources.is_empty() {
        return Err(Error::InvalidArgument("BFS needs at least one source".into()));
    }
    let n = g.num_nodes();
    let mut dist = vec![UNREACHABLE; n];
    let mut queue = VecDeque::new();
    for &s in sources {
        if s >= n {
            return Err(Error::InvalidArgument(format!("source {s} out of range")));
        }
        if dist[s] != 0 {
            dist[s] = 0;
            queue.push_back(s);
        }
    }
    bfs_fill(g, &mut dist, &mut queue);
    Ok(dist)
}

fn bfs_fill(g: &CsrGraph, dist: &mut [u32], queue: &mut VecDeque<usize>) {
    while let Some(u) = queue.pop_front() {
        let next = dist[u] + 1;
        for &v in g.neighbors(u) {
            if dist[v] == UNREACHABLE {
                dist[v] = next;
                queue.push_back(v);
            }
        }
    }
}

pub(crate) fn bfs_from(g: &CsrGraph, source: usize) -> Vec<u32> {
    let mut dist = vec![UNREACHABLE; g.num_nodes()];
    let mut queue = VecDeque::from([source]);
    dist[source] = 0;
    bfs_fill(g, &mut dist, &mut queue);
    dist
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GraphShape {
    /// Largest finite eccentricity over all components.
    pub diameter: u32,
    /// Component id per node, numbered in order of lowest member node.
    pub components: Vec<usize>,
    pub num_components: usize,
    /// False when the diameter is a double-sweep lower bound.
    pub exact: bool,
}

pub fn diameter_and_components(g: &CsrGraph) -> GraphShape {
    let n = g.num_nodes();
    let mut components = vec![usize::MAX; n];
    let mut num_components = 0;
    for s in 0..n {
        if components[s] != usize::MAX {
            continue;
        }
        let dist = bfs_from(g, s);
        for (c, d) in components.iter_mut().zip(&dist) {
            if *d != UNREACHABLE {
                *c = num_components;
            }
        }
        num_components += 1;
    }

    let eccentricity = |dist: &[u32]| dist.iter().copied().filter(|&d| d != UNREACHABLE).max().unwrap_or(0);

    if n <= EXACT_DIAMETER_LIMIT {
        let diameter = (0..n)
            .into_par_iter()
            .map(|s| eccentricity(&bfs_from(g, s)))
            .max()
            .unwrap_or(0);
        GraphShape {
            diameter,
            components,
            num_components,
            exact: true,
        }
    } else {
        log::warn!("{n} nodes exceeds {EXACT_DIAMETER_LIMIT}; diameter is a double-sweep lower bound");
        let mut diameter = 0;
        let mut seen = vec![false; num_components];
        for s in 0..n {
            if seen[components[s]] {
                continue;
            }
            seen[components[s]] = true;
            let first = bfs_from(g, s);
            let far = (0..n)
                .filter(|&v| first[v] != UNREACHABLE)
                .max_by_key(|&v| (first[v], std::cmp::Reverse(v)))
                .unwrap_or(s);
            diameter = diameter.max(eccentricity(&bfs_from(g, far)));
        }
        GraphShape {
            diameter,
            components,
            num_components,
            exact: false,
        }
    }
}

/// One mixed pair: row/column `target` becomes
/// `lambda * target + (1 - lambda) * partner`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairMix {
    pub target: usize,
    pub partner: usize,
    pub lambda: f64,
}

/// A batch of simultaneous pair mixes.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct MixSelector {
    pairs: Vec<PairMix>,
}

impl MixSelector {
    /// Targets must be distinct, no partner may also be a target, and every
    /// lambda lies in `[0, 1]`.
    pub fn new(pairs: Vec<PairMix>) -> Result<Self> {
        let mut targets: Vec<usize> = pairs.iter().map(|p| p.target).collect();
        targets.sort_unstable();
        if targets.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::InvalidArgument("mix targets must be distinct".into()));
        }
        for p in &pairs {
            if !(0.0..=1.0).contains(&p.lambda) {
                return Err(Error::InvalidArgument(format!("lambda {} outside [0, 1]", p.lambda)));
            }
            if targets.binary_search(&p.partner).is_ok() {
                return Err(Error::InvalidArgument(format!(
                    "partner {} is also a mix target",
                    p.partner
                )));
            }
        }
        Ok(Self { pairs })
    }

    pub fn pairs(&self) -> &[PairMix] {
        &self.pairs
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Dense `S` with row `target` replaced by `λ e_target + (1 - λ) e_partner`.
    pub fn to_dense(&self, n: usize) -> Matrix {
        let mut s = Matrix::identity(n);
        for p in &self.pairs {
            s[(p.target, p.target)] = p.lambda;
            s[(p.target, p.partner)] += 1.0 - p.lambda;
        }
        s
    }
}

/// `S · A · Sᵀ`, computed sparsely from the original `A`.
///
/// For a single pair this is exactly row mixup followed by column mixup.
/// Coefficients that are exactly zero contribute nothing, so `λ = 1` pairs
/// leave the sparsity pattern untouched.
pub fn mix_adjacency(a: &CsrGraph, sel: &MixSelector) -> Result<CsrGraph> {
    let n = a.num_nodes();
    for p in sel.pairs() {
        if p.target >= n || p.partner >= n {
            return Err(Error::InvalidArgument(format!(
                "pair ({}, {}) outside a graph of {n} nodes",
                p.target, p.partner
            )));
        }
    }
    if sel.is_empty() {
        return Ok(a.clone());
    }

    // Row r of S as (column, coefficient) terms.
    let mut s_rows: Vec<Vec<(usize, f64)>> = (0..n).map(|r| vec![(r, 1.0)]).collect();
    // Column v of S: every row b with S[b, v] != 0.
    let mut s_cols: Vec<Vec<(usize, f64)>> = (0..n).map(|v| vec![(v, 1.0)]).collect();
    for p in sel.pairs() {
        let mut row = Vec::with_capacity(2);
        if p.lambda != 0.0 {
            row.push((p.target, p.lambda));
        }
        if p.lambda != 1.0 {
            row.push((p.partner, 1.0 - p.lambda));
        }
        s_rows[p.target] = row;
        s_cols[p.target].retain(|&(b, _)| b != p.target);
        if p.lambda != 0.0 {
            s_cols[p.target].push((p.target, p.lambda));
        }
        if p.lambda != 1.0 {
            s_cols[p.partner].push((p.target, 1.0 - p.lambda));
        }
    }
    for col in &mut s_cols {
        col.sort_by_key(|&(b, _)| b);
    }

    // Only the upper triangle is accumulated and then mirrored, so the result
    // is exactly symmetric.
    let mut acc = vec![0.0; n];
    let mut touched = vec![false; n];
    let mut upper: Vec<(usize, usize, f64)> = Vec::new();
    let mut cols_in_row = Vec::new();
    for (row, s_row) in s_rows.iter().enumerate() {
        for &(u, s_ru) in s_row {
            for (&v, &w) in a.neighbors(u).iter().zip(a.row_weights(u)) {
                let bv = s_ru * w;
                for &(b, s_bv) in &s_cols[v] {
                    if b < row {
                        continue;
                    }
                    if !touched[b] {
                        touched[b] = true;
                        cols_in_row.push(b);
                    }
                    acc[b] += bv * s_bv;
                }
            }
        }
        cols_in_row.sort_unstable();
        for &b in &cols_in_row {
            if acc[b] != 0.0 {
                upper.push((row, b, acc[b]));
            }
            acc[b] = 0.0;
            touched[b] = false;
        }
        cols_in_row.clear();
    }

    let mut triplets = Vec::with_capacity(upper.len() * 2);
    for &(r, c, w) in &upper {
        triplets.push((r, c, w));
        if r != c {
            triplets.push((c, r, w));
        }
    }
    triplets.sort_by_key(|t| (t.0, t.1));
    CsrGraph::from_sorted_triplets(n, &triplets)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path3() -> CsrGraph {
        CsrGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap()
    }

    #[test]
    fn self_loops_on_empty_graph() {
        let g = add_self_loops(&CsrGraph::from_edges(2, &[]).unwrap());
        assert_eq!(g.neighbors(0), &[0]);
        assert_eq!(g.neighbors(1), &[1]);
        assert_eq!(g.nnz(), 2);
    }

    #[test]
    fn self_loops_are_idempotent_and_keep_order() {
        let g = add_self_loops(&CsrGraph::from_edges(2, &[(0, 1)]).unwrap());
        assert_eq!(g.neighbors(0), &[0, 1]);
        assert_eq!(g.neighbors(1), &[0, 1]);
        assert_eq!(add_self_loops(&g), g);
    }

    #[test]
    fn normalization_hand_values() {
        let single = add_self_loops(&CsrGraph::from_edges(1, &[]).unwrap());
        assert_eq!(sym_normalize(&single).unwrap().row_weights(0), &[1.0]);

        let pair = sym_normalize(&add_self_loops(&CsrGraph::from_edges(2, &[(0, 1)]).unwrap())).unwrap();
        for i in 0..2 {
            for &w in pair.row_weights(i) {
                assert!((w - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn normalized_regular_graph_rows_sum_to_one() {
        // 5-cycle plus self-loops: every node has weighted degree 3.
        let edges: Vec<_> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
        let g = sym_normalize(&add_self_loops(&CsrGraph::from_edges(5, &edges).unwrap())).unwrap();
        for d in g.weighted_degrees() {
            assert!((d - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_degree_is_rejected() {
        assert!(sym_normalize(&CsrGraph::from_edges(2, &[]).unwrap()).is_err());
    }

    #[test]
    fn bfs_cases() {
        let mut g = CsrGraph::from_edges(4, &[(0, 1), (1, 2)]).unwrap();
        g = add_self_loops(&g);
        assert_eq!(bfs_distances(&g, &[0]).unwrap(), vec![0, 1, 2, UNREACHABLE]);
        assert_eq!(bfs_distances(&g, &[1]).unwrap()[1], 0);
        assert!(bfs_distances(&g, &[]).is_err());
    }

    #[test]
    fn diameter_cases() {
        assert_eq!(diameter_and_components(&path3()).diameter, 2);

        let two = diameter_and_components(&CsrGraph::from_edges(4, &[(0, 1), (2, 3)]).unwrap());
        assert_eq!(two.diameter, 1);
        assert_eq!(two.num_components, 2);
        assert_eq!(two.components, vec![0, 0, 1, 1]);

        let edges: Vec<_> = (0..5).map(|i| (i, (i + 1) % 5)).collect();
        assert_eq!(
            diameter_and_components(&CsrGraph::from_edges(5, &edges).unwrap()).diameter,
            2
        );
    }

    #[test]
    fn identity_shapes() {
        assert!(identity_adjacency(0).is_err());
        let i1 = identity_adjacency(1).unwrap();
        assert_eq!(i1.neighbors(0), &[0]);
        assert!(identity_adjacency(3).unwrap().is_identity());
    }

    #[test]
    fn selector_validation() {
        let p = |target, partner, lambda| PairMix {
            target,
            partner,
            lambda,
        };
        assert!(MixSelector::new(vec![p(0, 1, 0.5), p(0, 2, 0.5)]).is_err());
        assert!(MixSelector::new(vec![p(0, 1, 0.5), p(1, 2, 0.5)]).is_err());
        assert!(MixSelector::new(vec![p(0, 1, 1.5)]).is_err());
        assert!(MixSelector::new(vec![p(0, 2, 0.5), p(1, 2, 0.3)]).is_ok());
    }

    #[test]
    fn mixing_identities() {
        let a = add_self_loops(&path3());
        assert_eq!(mix_adjacency(&a, &MixSelector::default()).unwrap(), a);
        let ones = MixSelector::new(vec![PairMix {
            target: 0,
            partner: 2,
            lambda: 1.0,
        }])
        .unwrap();
        assert_eq!(mix_adjacency(&a, &ones).unwrap(), a);
    }

    #[test]
    fn path_mix_matches_hand_oracle() {
        // A = [[1,1,0],[1,1,1],[0,1,1]], S row 0 = (0.5, 0, 0.5).
        // S·A row 0 = (0.5, 1, 0.5); S·A·Sᵀ:
        //   (0,0) = 0.5*0.5 + 0.5*0.5 = 0.5, (0,1) = 1, (0,2) = (0.5, 1, 0.5)·e_2 = 0.5
        //   (1,1) = 1, (1,2) = 1, (2,2) = 1
        let a = add_self_loops(&path3());
        let sel = MixSelector::new(vec![PairMix {
            target: 0,
            partner: 2,
            lambda: 0.5,
        }])
        .unwrap();
        let mixed = mix_adjacency(&a, &sel).unwrap().to_dense();
        let expected = [[0.5, 1.0, 0.5], [1.0, 1.0, 1.0], [0.5, 1.0, 1.0]];
        for i in 0..3 {
            for j in 0..3 {
                assert!((mixed[(i, j)] - expected[i][j]).abs() < 1e-15, "({i},{j})");
            }
        }
        let s = sel.to_dense(3);
        let dense = s.matmul(&a.to_dense()).unwrap().matmul_t(&s).unwrap();
        assert!(mixed.max_abs_diff(&dense).unwrap() < 1e-15);
    }
}
