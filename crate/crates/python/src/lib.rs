//! Python bindings: dataset generation, training, and the diagnostics.

use std::path::PathBuf;

use nodemixup::diagnostics;
use nodemixup::gradcheck::{run_gradcheck, ToyGraph};
use nodemixup::graphalg::{self, CsrGraph, MixSelector, PairMix};
use nodemixup::graphio::{self, SbmConfig};
use nodemixup::trainer::train_multi;
use nodemixup::{Matrix, TrainConfig};
use pyo3::exceptions::{PyIOError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(e: nodemixup::Error) -> PyErr {
    match e {
        nodemixup::Error::Io { .. } => PyIOError::new_err(e.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn matrix(rows: Vec<Vec<f64>>) -> PyResult<Matrix> {
    Matrix::from_rows(&rows).map_err(to_py)
}

fn summary<'py>(py: Python<'py>, d: &nodemixup::Dataset) -> PyResult<Bound<'py, PyDict>> {
    let out = PyDict::new(py);
    out.set_item("nodes", d.num_nodes())?;
    out.set_item("edges", d.edges().len())?;
    out.set_item("features", d.num_features())?;
    out.set_item("classes", d.num_classes())?;
    out.set_item("labeled", d.split().labeled.len())?;
    out.set_item("valid", d.split().valid.len())?;
    out.set_item("test", d.split().test.len())?;
    Ok(out)
}

/// Largest relative gradient error on a random toy graph.
#[pyfunction]
#[pyo3(signature = (seed = 0, nodes = 8, eps = 1e-5))]
pub fn gradcheck(seed: u64, nodes: usize, eps: f64) -> PyResult<f64> {
    let toy = ToyGraph {
        nodes,
        seed,
        ..ToyGraph::default()
    };
    run_gradcheck(&toy, eps).map(|o| o.max_rel_err()).map_err(to_py)
}

/// Writes a stochastic block model dataset to `out_dir` and returns its sizes.
#[pyfunction]
#[pyo3(signature = (
    out_dir, classes = 4, per_class = 200, p_in = 0.05, p_out = 0.005, feature_dim = 16,
    noise = 1.0, labels_per_class = 20, valid_per_class = 30, seed = 0
))]
#[allow(clippy::too_many_arguments)]
pub fn generate_sbm<'py>(
    py: Python<'py>,
    out_dir: PathBuf,
    classes: usize,
    per_class: usize,
    p_in: f64,
    p_out: f64,
    feature_dim: usize,
    noise: f64,
    labels_per_class: usize,
    valid_per_class: usize,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let d = graphio::generate_sbm(&SbmConfig {
        num_classes: classes,
        nodes_per_class: per_class,
        p_in,
        p_out,
        feature_dim,
        feature_noise: noise,
        seed,
        labels_per_class,
        valid_per_class,
    })
    .map_err(to_py)?;
    graphio::save_dataset(&d, &out_dir).map_err(to_py)?;
    summary(py, &d)
}

/// Sizes of the dataset stored in `data_dir`.
#[pyfunction]
pub fn dataset_summary<'py>(py: Python<'py>, data_dir: PathBuf) -> PyResult<Bound<'py, PyDict>> {
    let d = graphio::load_dataset(&data_dir).map_err(to_py)?;
    summary(py, &d)
}

/// Trains on `data_dir` with an optional JSON config (same schema as the
/// CLI's `--config`) and returns test/validation accuracy statistics.
#[pyfunction]
#[pyo3(signature = (data_dir, config_json = None, jobs = 1))]
pub fn train<'py>(
    py: Python<'py>,
    data_dir: PathBuf,
    config_json: Option<&str>,
    jobs: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let cfg: TrainConfig = match config_json {
        Some(text) => serde_json::from_str(text).map_err(|e| PyValueError::new_err(e.to_string()))?,
        None => TrainConfig::default(),
    };
    let d = graphio::load_dataset(&data_dir).map_err(to_py)?;
    let r = py.detach(|| train_multi(&d, &cfg, jobs)).map_err(to_py)?;
    let out = PyDict::new(py);
    out.set_item("test_mean", r.test.mean)?;
    out.set_item("test_std", r.test.std)?;
    out.set_item("test_stderr", r.test.stderr)?;
    out.set_item("val_mean", r.val.mean)?;
    let per_seed: Vec<(u64, f64)> = r.per_seed.iter().map(|s| (s.seed, s.test_acc)).collect();
    out.set_item("per_seed", per_seed)?;
    Ok(out)
}

/// `(unlabeled node ids, reaching coefficients)` for an undirected edge list.
#[pyfunction]
pub fn reaching_coefficient(
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    labeled: Vec<usize>,
) -> PyResult<(Vec<usize>, Vec<f64>)> {
    let g = CsrGraph::from_edges(num_nodes, &edges).map_err(to_py)?;
    let r = diagnostics::reaching_coefficient(&g, &labeled).map_err(to_py)?;
    Ok((r.nodes, r.rc))
}

/// Linear CKA between two representation matrices with the same row count.
#[pyfunction]
pub fn cka(a: Vec<Vec<f64>>, b: Vec<Vec<f64>>) -> PyResult<f64> {
    diagnostics::cka(&matrix(a)?, &matrix(b)?).map_err(to_py)
}

/// Dense `S·A·Sᵀ` for `pairs` of `(target, partner, lambda)`.
#[pyfunction]
pub fn mix_adjacency(
    num_nodes: usize,
    edges: Vec<(usize, usize)>,
    pairs: Vec<(usize, usize, f64)>,
) -> PyResult<Vec<Vec<f64>>> {
    let g = CsrGraph::from_edges(num_nodes, &edges).map_err(to_py)?;
    let sel = MixSelector::new(
        pairs
            .into_iter()
            .map(|(target, partner, lambda)| PairMix {
                target,
                partner,
                lambda,
            })
            .collect(),
    )
    .map_err(to_py)?;
    Ok(graphalg::mix_adjacency(&g, &sel).map_err(to_py)?.to_dense().to_rows())
}

#[pymodule]
fn nodemixup_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    m.add_function(wrap_pyfunction!(gradcheck, m)?)?;
    m.add_function(wrap_pyfunction!(generate_sbm, m)?)?;
    m.add_function(wrap_pyfunction!(dataset_summary, m)?)?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(reaching_coefficient, m)?)?;
    m.add_function(wrap_pyfunction!(cka, m)?)?;
    m.add_function(wrap_pyfunction!(mix_adjacency, m)?)?;
    Ok(())
}
