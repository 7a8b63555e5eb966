//! Datasets on disk and in memory.
//!
//! A dataset directory holds four text files:
//!
//! * `edges.tsv`: one undirected edge per line, `u<TAB>v`, 0-based ids.
//! * `features.tsv`: line `i` holds the `F` feature values of node `i`.
//! * `labels.tsv`: line `i` holds the class index of node `i`. An optional
//!   `# num_classes: C` header fixes the class count; otherwise it is
//!   `max label + 1`.
//! * `split.json`: `{"labeled": [...], "valid": [...], "test": [...]}`.
//!
//! Lines starting with `#` and blank lines are ignored everywhere. Fields may
//! be separated by any whitespace. Numbers are parsed with Rust's
//! locale-independent parsers.

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphalg::CsrGraph;
use crate::matrix::Matrix;
use crate::rng;

pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.tsv";
pub const LABELS_FILE: &str = "labels.tsv";
pub const SPLIT_FILE: &str = "split.json";

/// Node-id sets for training, model selection and evaluation. Nodes outside
/// `labeled` form the unlabeled set, whether or not they appear in `valid`
/// or `test`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub labeled: Vec<usize>,
    pub valid: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    /// Sorts each set and checks that the sets are disjoint, in range and
    /// that `labeled` is non-empty.
    pub fn new(mut labeled: Vec<usize>, mut valid: Vec<usize>, mut test: Vec<usize>, num_nodes: usize) -> Result<Self> {
        labeled.sort_unstable();
        valid.sort_unstable();
        test.sort_unstable();
        if labeled.is_empty() {
            return Err(Error::InvalidDataset("split has no labeled nodes".into()));
        }
        let mut owner = vec![None; num_nodes];
        for (name, ids) in [("labeled", &labeled), ("valid", &valid), ("test", &test)] {
            for &i in ids {
                if i >= num_nodes {
                    return Err(Error::InvalidDataset(format!(
                        "{name} id {i} out of range for {num_nodes} nodes"
                    )));
                }
                if let Some(prev) = owner[i].replace(name) {
                    return Err(Error::InvalidDataset(format!(
                        "node {i} appears in both {prev} and {name}"
                    )));
                }
            }
        }
        Ok(Self { labeled, valid, test })
    }
}

/// Immutable graph, features, labels and split.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    num_classes: usize,
    edges: Vec<(usize, usize)>,
    features: Matrix,
    labels: Vec<usize>,
    split: SplitSpec,
}

impl Dataset {
    /// Validates and canonicalizes: edges become sorted `(min, max)` pairs,
    /// duplicates and self-loops are dropped (self-loops are added later by
    /// the propagation operator).
    pub fn new(
        num_classes: usize,
        edges: Vec<(usize, usize)>,
        features: Matrix,
        labels: Vec<usize>,
        split: SplitSpec,
    ) -> Result<Self> {
        let n = labels.len();
        if features.rows() != n {
            return Err(Error::InvalidDataset(format!(
                "{} feature rows for {n} labeled nodes",
                features.rows()
            )));
        }
        if !features.is_finite() {
            return Err(Error::InvalidDataset("features contain non-finite values".into()));
        }
        if num_classes == 0 {
            return Err(Error::InvalidDataset("at least one class is required".into()));
        }
        if let Some((i, &l)) = labels.iter().enumerate().find(|(_, &l)| l >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "node {i} has label {l} but there are {num_classes} classes"
            )));
        }
        let mut canon = Vec::with_capacity(edges.len());
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::InvalidDataset(format!(
                    "edge ({u}, {v}) out of range for {n} nodes"
                )));
            }
            if u != v {
                canon.push((u.min(v), u.max(v)));
            }
        }
        canon.sort_unstable();
        canon.dedup();
        let split = SplitSpec::new(split.labeled, split.valid, split.test, n)?;
        Ok(Self {
            num_classes,
            edges: canon,
            features,
            labels,
            split,
        })
    }

    pub fn with_split(&self, split: SplitSpec) -> Result<Self> {
        let split = SplitSpec::new(split.labeled, split.valid, split.test, self.num_nodes())?;
        Ok(Self { split, ..self.clone() })
    }

    pub fn num_nodes(&self) -> usize {
        self.labels.len()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Matrix {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn split(&self) -> &SplitSpec {
        &self.split
    }

    /// Every node not in the labeled set, ascending.
    pub fn unlabeled_ids(&self) -> Vec<usize> {
        let mut is_labeled = vec![false; self.num_nodes()];
        for &i in &self.split.labeled {
            is_labeled[i] = true;
        }
        (0..self.num_nodes()).filter(|&i| !is_labeled[i]).collect()
    }

    /// Unit-weight symmetric adjacency without self-loops.
    pub fn graph(&self) -> CsrGraph {
        CsrGraph::from_edges(self.num_nodes(), &self.edges).expect("dataset edges are validated at construction")
    }

    /// One-hot rows for the given nodes.
    pub fn one_hot(&self, ids: &[usize]) -> Matrix {
        let mut m = Matrix::zeros(ids.len(), self.num_classes);
        for (r, &i) in ids.iter().enumerate() {
            m[(r, self.labels[i])] = 1.0;
        }
        m
    }
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Non-comment, non-blank lines with their 1-based line numbers.
fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_err(file: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        file: file.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

pub fn load_dataset(dir: impl AsRef<Path>) -> Result<Dataset> {
    let dir = dir.as_ref();
    let labels_path = dir.join(LABELS_FILE);
    let features_path = dir.join(FEATURES_FILE);
    let edges_path = dir.join(EDGES_FILE);
    let split_path = dir.join(SPLIT_FILE);

    let labels_text = read(&labels_path)?;
    let mut declared_classes = None;
    for line in labels_text.lines() {
        if let Some(rest) = line.trim().strip_prefix('#') {
            if let Some(v) = rest.trim().strip_prefix("num_classes:") {
                let c = v
                    .trim()
                    .parse::<usize>()
                    .map_err(|_| parse_err(&labels_path, 1, format!("bad num_classes header {:?}", v.trim())))?;
                declared_classes = Some(c);
            }
        }
    }
    let mut labels = Vec::new();
    let mut label_lines = Vec::new();
    for (ln, line) in content_lines(&labels_text) {
        let l = line
            .parse::<usize>()
            .map_err(|_| parse_err(&labels_path, ln, format!("expected a class index, got {line:?}")))?;
        labels.push(l);
        label_lines.push(ln);
    }
    let num_classes = match declared_classes {
        Some(c) => {
            if let Some(k) = labels.iter().position(|&l| l >= c) {
                return Err(parse_err(
                    &labels_path,
                    label_lines[k],
                    format!("label {} out of range for {c} classes", labels[k]),
                ));
            }
            c
        }
        None => labels.iter().max().map_or(0, |m| m + 1),
    };
    let n = labels.len();

    let features_text = read(&features_path)?;
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (ln, line) in content_lines(&features_text) {
        let before = data.len();
        for tok in line.split_whitespace() {
            let v = tok
                .parse::<f64>()
                .map_err(|_| parse_err(&features_path, ln, format!("bad real {tok:?}")))?;
            if !v.is_finite() {
                return Err(parse_err(&features_path, ln, format!("non-finite value {tok:?}")));
            }
            data.push(v);
        }
        let width = data.len() - before;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(parse_err(&features_path, ln, format!("{width} values, expected {d}")));
            }
            _ => {}
        }
        rows += 1;
    }
    if rows != n {
        return Err(Error::InvalidDataset(format!(
            "{} has {rows} rows but {} has {n}",
            features_path.display(),
            labels_path.display()
        )));
    }
    let features = Matrix::from_vec(rows, dim.unwrap_or(0), data)?;

    let edges_text = read(&edges_path)?;
    let mut edges = Vec::new();
    for (ln, line) in content_lines(&edges_text) {
        let mut it = line.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(parse_err(&edges_path, ln, "expected two node ids"));
        };
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| parse_err(&edges_path, ln, format!("bad node id {t:?}")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u >= n || v >= n {
            return Err(parse_err(
                &edges_path,
                ln,
                format!("edge ({u}, {v}) out of range for {n} nodes"),
            ));
        }
        edges.push((u, v));
    }

    let split: SplitSpec =
        serde_json::from_str(&read(&split_path)?).map_err(|e| parse_err(&split_path, e.line(), e.to_string()))?;

    Dataset::new(num_classes, edges, features, labels, split)
}

pub fn save_dataset(d: &Dataset, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let write = |name: &str, body: String| -> Result<PathBuf> {
        let p = dir.join(name);
        fs::write(&p, body).map_err(|e| Error::io(&p, e))?;
        Ok(p)
    };

    let mut edges = String::new();
    for (u, v) in &d.edges {
        edges.push_str(&format!("{u}\t{v}\n"));
    }
    write(EDGES_FILE, edges)?;

    let mut feats = String::new();
    for i in 0..d.num_nodes() {
        let row: Vec<String> = d.features.row(i).iter().map(|x| x.to_string()).collect();
        feats.push_str(&row.join("\t"));
        feats.push('\n');
    }
    write(FEATURES_FILE, feats)?;

    let mut labels = format!("# num_classes: {}\n", d.num_classes);
    for l in &d.labels {
        labels.push_str(&format!("{l}\n"));
    }
    write(LABELS_FILE, labels)?;

    let mut split = serde_json::to_string(&d.split)?;
    split.push('\n');
    write(SPLIT_FILE, split)?;
    Ok(())
}

/// Stochastic block model parameters. Node `i` belongs to class
/// `i / nodes_per_class`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SbmConfig {
    pub num_classes: usize,
    pub nodes_per_class: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub feature_noise: f64,
    pub seed: u64,
    /// Split attached to the generated dataset.
    pub labels_per_class: usize,
    pub valid_per_class: usize,
}

impl Default for SbmConfig {
    fn default() -> Self {
        Self {
            num_classes: 4,
            nodes_per_class: 200,
            p_in: 0.05,
            p_out: 0.005,
            feature_dim: 16,
            feature_noise: 1.0,
            seed: 0,
            labels_per_class: 20,
            valid_per_class: 30,
        }
    }
}

/// Class-`c` nodes get feature `e_c + noise`, with `e_c` the `c`-th unit
/// vector of dimension `feature_dim` and i.i.d. `N(0, feature_noise²)` noise.
pub fn generate_sbm(cfg: &SbmConfig) -> Result<Dataset> {
    if !(0.0 <= cfg.p_out && cfg.p_out < cfg.p_in && cfg.p_in <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "need 0 <= p_out < p_in <= 1, got p_in={} p_out={}",
            cfg.p_in, cfg.p_out
        )));
    }
    if cfg.num_classes == 0 || cfg.nodes_per_class == 0 || cfg.feature_dim == 0 {
        return Err(Error::InvalidArgument("counts must be at least 1".into()));
    }
    if cfg.feature_dim < cfg.num_classes {
        return Err(Error::InvalidArgument(format!(
            "feature_dim {} cannot hold {} one-hot centroids",
            cfg.feature_dim, cfg.num_classes
        )));
    }
    if !(cfg.feature_noise >= 0.0 && cfg.feature_noise.is_finite()) {
        return Err(Error::InvalidArgument("feature_noise must be finite and >= 0".into()));
    }
    let n = cfg.num_classes * cfg.nodes_per_class;
    let labels: Vec<usize> = (0..n).map(|i| i / cfg.nodes_per_class).collect();

    let mut edge_rng = rng::substream(cfg.seed, rng::SBM_EDGES);
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] { cfg.p_in } else { cfg.p_out };
            if edge_rng.random::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let mut feat_rng = rng::substream(cfg.seed, rng::SBM_FEATURES);
    let noise = Normal::new(0.0, cfg.feature_noise).map_err(|e| Error::InvalidArgument(e.to_string()))?;
    let mut features = Matrix::zeros(n, cfg.feature_dim);
    for i in 0..n {
        let row = features.row_mut(i);
        if cfg.feature_noise > 0.0 {
            for x in row.iter_mut() {
                *x = noise.sample(&mut feat_rng);
            }
        }
        row[labels[i]] += 1.0;
    }

    let placeholder = SplitSpec {
        labeled: vec![0],
        valid: vec![],
        test: vec![],
    };
    let d = Dataset::new(cfg.num_classes, edges, features, labels, placeholder)?;
    let split = make_split(&d, cfg.labels_per_class, cfg.valid_per_class, cfg.seed)?;
    d.with_split(split)
}

/// Samples `labels_per_class` labeled and `valid_per_class` validation nodes
/// per class without replacement; the rest is test.
pub fn make_split(d: &Dataset, labels_per_class: usize, valid_per_class: usize, seed: u64) -> Result<SplitSpec> {
    if labels_per_class == 0 {
        return Err(Error::InvalidArgument("labels_per_class must be at least 1".into()));
    }
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); d.num_classes()];
    for (i, &l) in d.labels().iter().enumerate() {
        by_class[l].push(i);
    }
    let mut rng = rng::substream(seed, rng::SPLIT);
    let (mut labeled, mut valid, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for (c, members) in by_class.iter_mut().enumerate() {
        if members.len() < labels_per_class + valid_per_class {
            return Err(Error::InvalidArgument(format!(
                "class {c} has {} nodes, fewer than {labels_per_class} + {valid_per_class}",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        labeled.extend_from_slice(&members[..labels_per_class]);
        valid.extend_from_slice(&members[labels_per_class..labels_per_class + valid_per_class]);
        test.extend_from_slice(&members[labels_per_class + valid_per_class..]);
    }
    SplitSpec::new(labeled, valid, test, d.num_nodes())
}

/// Imports the LINQS citation dump layout (`<name>.content` with
/// `id feature... class` rows and `<name>.cites` with `cited citing` rows).
/// Nodes keep `.content` order; class names are numbered in sorted order.
/// Citations naming unknown papers are skipped. The returned dataset carries
/// a placeholder split; attach a real one with [`Dataset::with_split`].
pub fn import_linqs(content: &Path, cites: &Path) -> Result<(Dataset, Vec<String>)> {
    let content_text = read(content)?;
    let mut ids = std::collections::HashMap::new();
    let mut class_names = Vec::new();
    let mut raw_labels = Vec::new();
    let mut data = Vec::new();
    let mut dim = None;
    for (ln, line) in content_lines(&content_text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() < 2 {
            return Err(parse_err(content, ln, "expected id, features and class"));
        }
        let width = toks.len() - 2;
        if *dim.get_or_insert(width) != width {
            return Err(parse_err(
                content,
                ln,
                format!("{width} features, expected {}", dim.unwrap()),
            ));
        }
        if ids.insert(toks[0].to_string(), ids.len()).is_some() {
            return Err(parse_err(content, ln, format!("duplicate paper id {}", toks[0])));
        }
        for t in &toks[1..toks.len() - 1] {
            data.push(
                t.parse::<f64>()
                    .map_err(|_| parse_err(content, ln, format!("bad feature {t:?}")))?,
            );
        }
        let class = toks[toks.len() - 1].to_string();
        raw_labels.push(class.clone());
        class_names.push(class);
    }
    class_names.sort();
    class_names.dedup();
    let labels: Vec<usize> = raw_labels
        .iter()
        .map(|c| class_names.binary_search(c).expect("class collected above"))
        .collect();
    let n = labels.len();
    let features = Matrix::from_vec(n, dim.unwrap_or(0), data)?;

    let cites_text = read(cites)?;
    let mut edges = Vec::new();
    let mut skipped = 0usize;
    for (ln, line) in content_lines(&cites_text) {
        let toks: Vec<&str> = line.split_whitespace().collect();
        if toks.len() != 2 {
            return Err(parse_err(cites, ln, "expected two paper ids"));
        }
        match (ids.get(toks[0]), ids.get(toks[1])) {
            (Some(&u), Some(&v)) => edges.push((u, v)),
            _ => skipped += 1,
        }
    }
    if skipped > 0 {
        log::warn!("skipped {skipped} citations naming unknown papers");
    }
    let placeholder = SplitSpec {
        labeled: vec![0],
        valid: vec![],
        test: vec![],
    };
    Ok((
        Dataset::new(class_names.len(), edges, features, labels, placeholder)?,
        class_names,
    ))
}
