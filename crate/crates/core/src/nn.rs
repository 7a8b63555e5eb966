//! Two-layer GCN with exact reverse-mode gradients, soft-target
//! cross-entropy, Adam, finite-difference gradient checking and a flat text
//! checkpoint format.
//!
//! The model computes
//!
//! ```text
//! logits = P · (drop(ReLU(P · drop(X) · W1 + b1)) · W2) + b2
//! ```
//!
//! where `P` is either a normalized adjacency or the identity. With the
//! identity the network is an MLP; see [`Propagation`].

use std::borrow::Cow;
use std::fmt::Write as _;
use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphalg::CsrGraph;
use crate::matrix::{argmax, softmax_in_place, Matrix};
use crate::rng::Rng;

/// Message-passing operator applied after each linear map.
#[derive(Debug, Clone, Copy)]
pub enum Propagation<'a> {
    /// Normalized, symmetric adjacency.
    Graph(&'a CsrGraph),
    /// No message passing.
    Identity,
}

impl Propagation<'_> {
    fn apply(&self, m: Matrix) -> Result<Matrix> {
        match self {
            Propagation::Graph(g) => g.matmul_dense(&m),
            Propagation::Identity => Ok(m),
        }
    }

    /// Adjoint of [`apply`](Self::apply). Adjacencies are symmetric, so this
    /// is the same product.
    fn apply_adjoint(&self, m: Matrix) -> Result<Matrix> {
        self.apply(m)
    }
}

pub enum Mode<'r> {
    Eval,
    /// Inverted dropout at `dropout` rate, masks drawn from `rng`.
    Train {
        dropout: f64,
        rng: &'r mut Rng,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub w1: Matrix,
    pub b1: Option<Vec<f64>>,
    pub w2: Matrix,
    pub b2: Option<Vec<f64>>,
}

/// Gradients share the parameter layout.
pub type Gradients = ModelParams;

impl ModelParams {
    /// Glorot-uniform weights, zero biases.
    pub fn glorot(features: usize, hidden: usize, classes: usize, bias: bool, rng: &mut Rng) -> Self {
        let mut layer = |fan_in: usize, fan_out: usize| {
            let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
            let dist = Uniform::new_inclusive(-limit, limit).expect("finite limit");
            let data = (0..fan_in * fan_out).map(|_| dist.sample(rng)).collect();
            Matrix::from_vec(fan_in, fan_out, data).expect("sized buffer")
        };
        let w1 = layer(features, hidden);
        let w2 = layer(hidden, classes);
        Self {
            w1,
            b1: bias.then(|| vec![0.0; hidden]),
            w2,
            b2: bias.then(|| vec![0.0; classes]),
        }
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            w1: Matrix::zeros(self.w1.rows(), self.w1.cols()),
            b1: self.b1.as_ref().map(|b| vec![0.0; b.len()]),
            w2: Matrix::zeros(self.w2.rows(), self.w2.cols()),
            b2: self.b2.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    pub fn num_features(&self) -> usize {
        self.w1.rows()
    }

    pub fn hidden(&self) -> usize {
        self.w1.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.w2.cols()
    }

    fn check_shapes(&self) -> Result<()> {
        if self.w1.cols() != self.w2.rows()
            || self.b1.as_ref().is_some_and(|b| b.len() != self.w1.cols())
            || self.b2.as_ref().is_some_and(|b| b.len() != self.w2.cols())
        {
            return Err(Error::Shape(format!(
                "inconsistent parameters: w1 {:?}, w2 {:?}",
                self.w1.shape(),
                self.w2.shape()
            )));
        }
        Ok(())
    }

    /// Named tensors in checkpoint order with their `(rows, cols)` shapes.
    pub fn tensors(&self) -> Vec<(&'static str, (usize, usize), &[f64])> {
        let mut out = vec![("w1", self.w1.shape(), self.w1.as_slice())];
        if let Some(b) = &self.b1 {
            out.push(("b1", (1, b.len()), b.as_slice()));
        }
        out.push(("w2", self.w2.shape(), self.w2.as_slice()));
        if let Some(b) = &self.b2 {
            out.push(("b2", (1, b.len()), b.as_slice()));
        }
        out
    }

    pub fn tensors_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out: Vec<(&'static str, &mut [f64])> = vec![("w1", self.w1.as_mut_slice())];
        if let Some(b) = &mut self.b1 {
            out.push(("b1", b.as_mut_slice()));
        }
        out.push(("w2", self.w2.as_mut_slice()));
        if let Some(b) = &mut self.b2 {
            out.push(("b2", b.as_mut_slice()));
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|(_, _, v)| v.iter().all(|x| x.is_finite()))
    }

    /// `self += scale * other`, tensor by tensor.
    pub fn add_scaled(&mut self, other: &ModelParams, scale: f64) {
        for ((_, dst), (_, _, src)) in self.tensors_mut().into_iter().zip(other.tensors()) {
            for (d, s) in dst.iter_mut().zip(src) {
                *d += scale * s;
            }
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("# nodemixup checkpoint v1\n");
        for (name, (rows, cols), values) in self.tensors() {
            let _ = writeln!(s, "{name} {rows} {cols}");
            for r in 0..rows {
                let row: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(|x| x.to_string()).collect();
                s.push_str(&row.join("\t"));
                s.push('\n');
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let bad = |line: usize, msg: String| Error::Parse {
            file: "<checkpoint>".into(),
            line,
            msg,
        };
        let mut lines = text
            .lines()
            .enumerate()
            .map(|(i, l)| (i + 1, l.trim()))
            .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));
        let mut tensors: Vec<(String, Matrix)> = Vec::new();
        while let Some((ln, header)) = lines.next() {
            let parts: Vec<&str> = header.split_whitespace().collect();
            let [name, rows, cols] = parts[..] else {
                return Err(bad(ln, format!("expected `name rows cols`, got {header:?}")));
            };
            let rows: usize = rows.parse().map_err(|_| bad(ln, "bad row count".into()))?;
            let cols: usize = cols.parse().map_err(|_| bad(ln, "bad column count".into()))?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (ln, line) = lines.next().ok_or_else(|| bad(ln, format!("{name} is truncated")))?;
                let before = data.len();
                for tok in line.split_whitespace() {
                    data.push(tok.parse::<f64>().map_err(|_| bad(ln, format!("bad value {tok:?}")))?);
                }
                if data.len() - before != cols {
                    return Err(bad(ln, format!("expected {cols} values")));
                }
            }
            tensors.push((name.to_string(), Matrix::from_vec(rows, cols, data)?));
        }
        let mut take = |name: &str| tensors.iter().position(|(n, _)| n == name).map(|k| tensors.remove(k).1);
        let w1 = take("w1").ok_or_else(|| bad(0, "missing w1".into()))?;
        let w2 = take("w2").ok_or_else(|| bad(0, "missing w2".into()))?;
        let b1 = take("b1").map(Matrix::into_vec);
        let b2 = take("b2").map(Matrix::into_vec);
        let p = Self { w1, b1, w2, b2 };
        p.check_shapes()?;
        Ok(p)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_text()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_text(&text).map_err(|e| match e {
            Error::Parse { line, msg, .. } => Error::Parse {
                file: path.to_path_buf(),
                line,
                msg,
            },
            other => other,
        })
    }
}

/// Intermediate values of one forward pass. `backward` takes it by value,
/// so a trace cannot be replayed.
pub struct ForwardTrace<'a> {
    prop: Propagation<'a>,
    input: Cow<'a, Matrix>,
    pre_activation: Matrix,
    hidden: Matrix,
    hidden_mask: Option<Vec<f64>>,
}

impl ForwardTrace<'_> {
    /// `true` where the first-layer pre-activation is positive.
    pub fn relu_pattern(&self) -> Vec<bool> {
        self.pre_activation.as_slice().iter().map(|&z| z > 0.0).collect()
    }
}

/// Inverted dropout applied to non-zero entries only; zeros stay zero
/// whether dropped or not, so no draws are spent on them.
fn dropout_inplace(m: &mut Matrix, rate: f64, rng: &mut Rng) -> Vec<f64> {
    let keep_scale = 1.0 / (1.0 - rate);
    let mut mask = vec![keep_scale; m.rows() * m.cols()];
    for (x, k) in m.as_mut_slice().iter_mut().zip(&mut mask) {
        if *x != 0.0 {
            if rng.random::<f64>() < rate {
                *k = 0.0;
                *x = 0.0;
            } else {
                *x *= keep_scale;
            }
        }
    }
    mask
}

pub fn forward<'a>(
    x: &'a Matrix,
    prop: Propagation<'a>,
    params: &ModelParams,
    mode: Mode<'_>,
) -> Result<(Matrix, ForwardTrace<'a>)> {
    params.check_shapes()?;
    if x.cols() != params.num_features() {
        return Err(Error::Shape(format!(
            "input has {} features, model expects {}",
            x.cols(),
            params.num_features()
        )));
    }
    if let Propagation::Graph(g) = prop {
        if g.num_nodes() != x.rows() {
            return Err(Error::Shape(format!(
                "{} input rows over a graph of {} nodes",
                x.rows(),
                g.num_nodes()
            )));
        }
    }
    let (rate, mut rng) = match mode {
        Mode::Eval => (0.0, None),
        Mode::Train { dropout, rng } => {
            if !(0.0..1.0).contains(&dropout) {
                return Err(Error::InvalidArgument(format!("dropout {dropout} outside [0, 1)")));
            }
            (dropout, Some(rng))
        }
    };

    let input: Cow<'a, Matrix> = match rng.as_deref_mut() {
        Some(r) if rate > 0.0 => {
            let mut dropped = x.clone();
            dropout_inplace(&mut dropped, rate, r);
            Cow::Owned(dropped)
        }
        _ => Cow::Borrowed(x),
    };

    let mut pre_activation = prop.apply(input.matmul(&params.w1)?)?;
    if let Some(b1) = &params.b1 {
        pre_activation.add_row_vector(b1)?;
    }
    let mut hidden = pre_activation.clone();
    for v in hidden.as_mut_slice() {
        if *v <= 0.0 {
            *v = 0.0;
        }
    }
    let hidden_mask = match rng {
        Some(r) if rate > 0.0 => Some(dropout_inplace(&mut hidden, rate, r)),
        _ => None,
    };
    let mut logits = prop.apply(hidden.matmul(&params.w2)?)?;
    if let Some(b2) = &params.b2 {
        logits.add_row_vector(b2)?;
    }
    if !logits.is_finite() {
        return Err(Error::NonFinite("logits (training diverged?)".into()));
    }
    Ok((
        logits,
        ForwardTrace {
            prop,
            input,
            pre_activation,
            hidden,
            hidden_mask,
        },
    ))
}

pub fn gcn_forward<'a>(
    x: &'a Matrix,
    a_hat: &'a CsrGraph,
    params: &ModelParams,
    mode: Mode<'_>,
) -> Result<(Matrix, ForwardTrace<'a>)> {
    forward(x, Propagation::Graph(a_hat), params, mode)
}

pub fn mlp_forward<'a>(x: &'a Matrix, params: &ModelParams, mode: Mode<'_>) -> Result<(Matrix, ForwardTrace<'a>)> {
    forward(x, Propagation::Identity, params, mode)
}

/// Exact gradients of the traced computation given `dloss/dlogits`.
pub fn backward(trace: ForwardTrace<'_>, params: &ModelParams, dlogits: &Matrix) -> Result<Gradients> {
    let ForwardTrace {
        prop,
        input,
        pre_activation,
        hidden,
        hidden_mask,
    } = trace;
    if dlogits.shape() != (pre_activation.rows(), params.num_classes()) {
        return Err(Error::Shape(format!("upstream gradient {:?}", dlogits.shape())));
    }
    let db2 = params.b2.as_ref().map(|_| dlogits.column_sums());
    let p = prop.apply_adjoint(dlogits.clone())?;
    let dw2 = hidden.t_matmul(&p)?;
    let mut dz1 = p.matmul_t(&params.w2)?;
    let mask = hidden_mask.as_deref();
    for (k, (g, &z)) in dz1.as_mut_slice().iter_mut().zip(pre_activation.as_slice()).enumerate() {
        if z <= 0.0 {
            *g = 0.0;
        } else if let Some(m) = mask {
            *g *= m[k];
        }
    }
    let db1 = params.b1.as_ref().map(|_| dz1.column_sums());
    let q = prop.apply_adjoint(dz1)?;
    let dw1 = input.t_matmul(&q)?;
    Ok(Gradients {
        w1: dw1,
        b1: db1,
        w2: dw2,
        b2: db2,
    })
}

fn check_targets(targets: &Matrix, weights: &[f64]) -> Result<()> {
    for r in 0..targets.rows() {
        let row = targets.row(r);
        let sum: f64 = row.iter().sum();
        if row.iter().any(|&t| t < 0.0) || (sum - 1.0).abs() > 1e-6 {
            return Err(Error::InvalidArgument(format!("target row {r} is not on the simplex")));
        }
    }
    if weights.iter().any(|&w| w.is_nan() || w < 0.0) {
        return Err(Error::InvalidArgument("row weights must be non-negative".into()));
    }
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::InvalidArgument("row weights are all zero".into()));
    }
    Ok(())
}

/// Weighted mean over rows of `-Σ_c t_c log softmax(z)_c`, together with its
/// gradient with respect to the logits.
pub fn soft_cross_entropy_with_grad(logits: &Matrix, targets: &Matrix, weights: &[f64]) -> Result<(f64, Matrix)> {
    if logits.shape() != targets.shape() || weights.len() != logits.rows() {
        return Err(Error::Shape(format!(
            "logits {:?}, targets {:?}, {} weights",
            logits.shape(),
            targets.shape(),
            weights.len()
        )));
    }
    check_targets(targets, weights)?;
    let total_w: f64 = weights.iter().sum();
    let mut loss = 0.0;
    let mut grad = Matrix::zeros(logits.rows(), logits.cols());
    for (r, &weight) in weights.iter().enumerate() {
        let z = logits.row(r);
        let top = argmax(z);
        let max = z[top];
        // ln Σ exp(z − max) as ln_1p of the non-maximal terms keeps tiny
        // losses from rounding to zero.
        let rest: f64 = z
            .iter()
            .enumerate()
            .filter(|&(k, _)| k != top)
            .map(|(_, v)| (v - max).exp())
            .sum();
        let log_norm = rest.ln_1p();
        let row_loss: f64 = targets
            .row(r)
            .iter()
            .zip(z)
            .filter(|(&t, _)| t != 0.0)
            .map(|(&t, &v)| t * ((max - v) + log_norm))
            .sum();
        let w = weight / total_w;
        loss += w * row_loss;
        let g = grad.row_mut(r);
        g.copy_from_slice(z);
        softmax_in_place(g);
        for (gv, &t) in g.iter_mut().zip(targets.row(r)) {
            *gv = w * (*gv - t);
        }
    }
    if !loss.is_finite() {
        return Err(Error::NonFinite("cross-entropy".into()));
    }
    Ok((loss, grad))
}

pub fn soft_cross_entropy(logits: &Matrix, targets: &Matrix, weights: &[f64]) -> Result<f64> {
    soft_cross_entropy_with_grad(logits, targets, weights).map(|(l, _)| l)
}

/// Unweighted cross-entropy over the listed rows of `logits`; the gradient is
/// scattered back into a full-size matrix.
pub fn masked_cross_entropy(logits: &Matrix, rows: &[usize], targets: &Matrix) -> Result<(f64, Matrix)> {
    let picked = logits.select_rows(rows);
    let (loss, g) = soft_cross_entropy_with_grad(&picked, targets, &vec![1.0; rows.len()])?;
    let mut full = Matrix::zeros(logits.rows(), logits.cols());
    for (r, &i) in rows.iter().enumerate() {
        full.row_mut(i).copy_from_slice(g.row(r));
    }
    Ok((loss, full))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightDecay {
    /// L2 penalty folded into the gradient before the moment updates.
    Coupled,
    /// Decoupled decay `θ ← θ - lr·wd·θ` applied after the Adam update.
    Decoupled,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// Applied to the first-layer weights only.
    pub weight_decay: f64,
    pub decay_mode: WeightDecay,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 5e-4,
            decay_mode: WeightDecay::Coupled,
        }
    }
}

#[derive(Debug, Clone)]
pub struct AdamState {
    pub config: AdamConfig,
    m: ModelParams,
    v: ModelParams,
    step: u64,
}

impl AdamState {
    pub fn new(config: AdamConfig, params: &ModelParams) -> Self {
        Self {
            config,
            m: params.zeros_like(),
            v: params.zeros_like(),
            step: 0,
        }
    }

    pub fn step(&self) -> u64 {
        self.step
    }
}

pub fn adam_step(params: &mut ModelParams, grads: &Gradients, state: &mut AdamState) -> Result<()> {
    if params
        .tensors()
        .iter()
        .map(|t| t.1)
        .ne(grads.tensors().iter().map(|t| t.1))
    {
        return Err(Error::Shape("gradients do not match parameters".into()));
    }
    state.step += 1;
    let c = state.config;
    let t = state.step as i32;
    let bias1 = 1.0 - c.beta1.powi(t);
    let bias2 = 1.0 - c.beta2.powi(t);
    let grads = grads.tensors();
    let mut m = state.m.tensors_mut();
    let mut v = state.v.tensors_mut();
    for (k, (name, theta)) in params.tensors_mut().into_iter().enumerate() {
        let decay = if name == "w1" { c.weight_decay } else { 0.0 };
        let g = grads[k].2;
        let (mk, vk) = (&mut *m[k].1, &mut *v[k].1);
        for j in 0..theta.len() {
            let mut gj = g[j];
            if c.decay_mode == WeightDecay::Coupled {
                gj += decay * theta[j];
            }
            mk[j] = c.beta1 * mk[j] + (1.0 - c.beta1) * gj;
            vk[j] = c.beta2 * vk[j] + (1.0 - c.beta2) * gj * gj;
            let m_hat = mk[j] / bias1;
            let v_hat = vk[j] / bias2;
            theta[j] -= c.lr * m_hat / (v_hat.sqrt() + c.eps);
            if c.decay_mode == WeightDecay::Decoupled {
                theta[j] -= c.lr * decay * theta[j];
            }
        }
    }
    Ok(())
}

/// A scalar objective evaluated at some parameters, plus the ReLU activation
/// pattern of every forward pass it ran (used to detect kink crossings).
pub struct Evaluation {
    pub loss: f64,
    pub relu_pattern: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckReport {
    pub max_rel_err: f64,
    pub worst_tensor: String,
    pub worst_index: usize,
    pub checked: usize,
    /// Coordinates whose `±eps` perturbation flipped a ReLU.
    pub skipped_kinks: usize,
}

/// Fraction of the largest analytic gradient entry used as the relative-error
/// denominator floor. Coordinates far below the gradient scale are then
/// judged on absolute error, where central differences at `eps = 1e-5` are
/// limited by round-off (about `1e-16 · |loss| / eps`).
pub const REL_ERR_FLOOR_FRACTION: f64 = 1e-3;

/// Smallest floor, for objectives whose gradient vanishes everywhere.
pub const REL_ERR_MIN_FLOOR: f64 = 1e-12;

pub fn relative_error(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central differences `(f(θ+ε) - f(θ-ε)) / 2ε` against `analytic` for every
/// coordinate of `params`.
pub fn check_gradients(
    params: &ModelParams,
    analytic: &Gradients,
    eps: f64,
    mut objective: impl FnMut(&ModelParams) -> Result<Evaluation>,
) -> Result<GradCheckReport> {
    let base = objective(params)?;
    let mut report = GradCheckReport {
        max_rel_err: 0.0,
        worst_tensor: String::new(),
        worst_index: 0,
        checked: 0,
        skipped_kinks: 0,
    };
    let mut probe = params.clone();
    let analytic = analytic.tensors();
    let scale = analytic
        .iter()
        .flat_map(|t| t.2.iter())
        .fold(0.0f64, |m, g| m.max(g.abs()));
    let floor = (REL_ERR_FLOOR_FRACTION * scale).max(REL_ERR_MIN_FLOOR);
    for (k, (name, _, values)) in params.tensors().into_iter().enumerate() {
        for (j, &value) in values.iter().enumerate() {
            let set = |p: &mut ModelParams, v: f64| p.tensors_mut()[k].1[j] = v;
            set(&mut probe, value + eps);
            let plus = objective(&probe)?;
            set(&mut probe, value - eps);
            let minus = objective(&probe)?;
            set(&mut probe, value);
            if plus.relu_pattern != base.relu_pattern || minus.relu_pattern != base.relu_pattern {
                report.skipped_kinks += 1;
                continue;
            }
            let numeric = (plus.loss - minus.loss) / (2.0 * eps);
            let err = relative_error(analytic[k].2[j], numeric, floor);
            report.checked += 1;
            if err > report.max_rel_err {
                report.max_rel_err = err;
                report.worst_tensor = name.to_string();
                report.worst_index = j;
            }
        }
    }
    Ok(report)
}

/// Gradient check of the supervised GCN loss on `dataset`'s labeled nodes,
/// eval mode (no dropout).
pub fn gradient_check(dataset: &crate::graphio::Dataset, params: &ModelParams, eps: f64) -> Result<GradCheckReport> {
    let a_hat = crate::graphalg::sym_normalize(&crate::graphalg::add_self_loops(&dataset.graph()))?;
    let labeled = &dataset.split().labeled;
    let targets = dataset.one_hot(labeled);
    let x = dataset.features();
    let (logits, trace) = gcn_forward(x, &a_hat, params, Mode::Eval)?;
    let (_, dlogits) = masked_cross_entropy(&logits, labeled, &targets)?;
    let grads = backward(trace, params, &dlogits)?;
    check_gradients(params, &grads, eps, |p| {
        let (logits, trace) = gcn_forward(x, &a_hat, p, Mode::Eval)?;
        let (loss, _) = masked_cross_entropy(&logits, labeled, &targets)?;
        Ok(Evaluation {
            loss,
            relu_pattern: trace.relu_pattern(),
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphalg::{add_self_loops, identity_adjacency, sym_normalize};
    use crate::rng::substream;

    fn small_params(seed: u64) -> ModelParams {
        ModelParams::glorot(3, 4, 2, true, &mut substream(seed, "test"))
    }

    fn small_input() -> Matrix {
        Matrix::from_rows(&[vec![1.0, 0.0, 0.5], vec![0.0, 2.0, -1.0], vec![0.3, 0.3, 0.3]]).unwrap()
    }

    #[test]
    fn identity_graph_equals_mlp_bitwise() {
        let p = small_params(1);
        let x = small_input();
        let eye = identity_adjacency(3).unwrap();
        let (a, _) = gcn_forward(&x, &eye, &p, Mode::Eval).unwrap();
        let (b, _) = mlp_forward(&x, &p, Mode::Eval).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn zero_weights_give_zero_logits_and_ln_c_loss() {
        let p = small_params(1).zeros_like();
        let x = small_input();
        let (logits, _) = mlp_forward(&x, &p, Mode::Eval).unwrap();
        assert!(logits.as_slice().iter().all(|&v| v == 0.0));
        let targets = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
        let loss = soft_cross_entropy(&logits, &targets, &[1.0; 3]).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn two_node_hand_computed_logits() {
        // A_hat for a 2-node edge with self-loops is 0.5 everywhere.
        // X = [1, 3]ᵀ, W1 = [2], b1 = [-1], W2 = [1, -1], b2 = [0, 0.5].
        // P·X·W1 = [4, 4] → +b1 → [3, 3] → ReLU → [3, 3]
        // H·W2 = [[3, -3], [3, -3]] → P· → same → +b2 → [[3, -2.5], [3, -2.5]]
        let a_hat = sym_normalize(&add_self_loops(&CsrGraph::from_edges(2, &[(0, 1)]).unwrap())).unwrap();
        let p = ModelParams {
            w1: Matrix::from_vec(1, 1, vec![2.0]).unwrap(),
            b1: Some(vec![-1.0]),
            w2: Matrix::from_vec(1, 2, vec![1.0, -1.0]).unwrap(),
            b2: Some(vec![0.0, 0.5]),
        };
        let x = Matrix::from_vec(2, 1, vec![1.0, 3.0]).unwrap();
        let (logits, _) = gcn_forward(&x, &a_hat, &p, Mode::Eval).unwrap();
        let expected = Matrix::from_rows(&[vec![3.0, -2.5], vec![3.0, -2.5]]).unwrap();
        assert!(logits.max_abs_diff(&expected).unwrap() < 1e-12);
    }

    #[test]
    fn permuting_rows_permutes_mlp_outputs() {
        let p = small_params(2);
        let x = small_input();
        let perm = [2, 0, 1];
        let (a, _) = mlp_forward(&x, &p, Mode::Eval).unwrap();
        let (b, _) = mlp_forward(&x.select_rows(&perm), &p, Mode::Eval).unwrap();
        assert_eq!(b, a.select_rows(&perm));
    }

    #[test]
    fn cross_entropy_cases() {
        let one_hot = Matrix::from_rows(&[vec![0.0, 1.0, 0.0]]).unwrap();
        let logits = Matrix::from_rows(&[vec![0.2, 1.5, -0.3]]).unwrap();
        let p = logits.softmax_rows()[(0, 1)];
        let loss = soft_cross_entropy(&logits, &one_hot, &[1.0]).unwrap();
        assert!((loss + p.ln()).abs() < 1e-14);

        let uniform = Matrix::zeros(1, 7);
        let mut t = Matrix::zeros(1, 7);
        t[(0, 3)] = 1.0;
        assert!((soft_cross_entropy(&uniform, &t, &[1.0]).unwrap() - 7f64.ln()).abs() < 1e-14);
        assert!((7f64.ln() - 1.9459).abs() < 1e-4);

        let yi = Matrix::from_rows(&[vec![1.0, 0.0, 0.0]]).unwrap();
        let yj = Matrix::from_rows(&[vec![0.0, 0.0, 1.0]]).unwrap();
        let lam = 0.3;
        let mixed = Matrix::from_rows(&[vec![lam, 0.0, 1.0 - lam]]).unwrap();
        let lhs = soft_cross_entropy(&logits, &mixed, &[1.0]).unwrap();
        let rhs = lam * soft_cross_entropy(&logits, &yi, &[1.0]).unwrap()
            + (1.0 - lam) * soft_cross_entropy(&logits, &yj, &[1.0]).unwrap();
        assert!((lhs - rhs).abs() < 1e-14);
    }

    #[test]
    fn cross_entropy_rejects_bad_inputs() {
        let logits = Matrix::zeros(1, 2);
        let off = Matrix::from_rows(&[vec![0.6, 0.6]]).unwrap();
        assert!(soft_cross_entropy(&logits, &off, &[1.0]).is_err());
        let ok = Matrix::from_rows(&[vec![0.5, 0.5]]).unwrap();
        assert!(soft_cross_entropy(&logits, &ok, &[0.0]).is_err());
    }

    #[test]
    fn loss_is_positive_for_finite_logits() {
        let logits = Matrix::from_rows(&[vec![30.0, -30.0]]).unwrap();
        let t = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        assert!(soft_cross_entropy(&logits, &t, &[1.0]).unwrap() > 0.0);
    }

    #[test]
    fn zero_upstream_gives_zero_gradients() {
        let p = small_params(3);
        let x = small_input();
        let (logits, trace) = mlp_forward(&x, &p, Mode::Eval).unwrap();
        let g = backward(trace, &p, &Matrix::zeros(logits.rows(), logits.cols())).unwrap();
        assert!(g.tensors().iter().all(|(_, _, v)| v.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn single_unit_chain_rule() {
        // One node, one feature x=2, one hidden unit, two classes, no bias.
        // z = x·w1 = 2·0.5 = 1 > 0, h = 1; logits = h·w2 = (0.3, -0.2).
        // dL/dlogits = softmax - y with y = e0; dL/dw2 = h · (softmax - y).
        let p = ModelParams {
            w1: Matrix::from_vec(1, 1, vec![0.5]).unwrap(),
            b1: None,
            w2: Matrix::from_vec(1, 2, vec![0.3, -0.2]).unwrap(),
            b2: None,
        };
        let x = Matrix::from_vec(1, 1, vec![2.0]).unwrap();
        let (logits, trace) = mlp_forward(&x, &p, Mode::Eval).unwrap();
        let y = Matrix::from_rows(&[vec![1.0, 0.0]]).unwrap();
        let (_, d) = soft_cross_entropy_with_grad(&logits, &y, &[1.0]).unwrap();
        let g = backward(trace, &p, &d).unwrap();
        let s0 = 0.3f64.exp() / (0.3f64.exp() + (-0.2f64).exp());
        assert!((g.w2[(0, 0)] - (s0 - 1.0)).abs() < 1e-15);
        assert!((g.w2[(0, 1)] - (1.0 - s0)).abs() < 1e-15);
        // dL/dw1 = x · (dL/dh) = 2 · Σ_c w2_c (softmax_c - y_c)
        let dh = 0.3 * (s0 - 1.0) + (-0.2) * (1.0 - s0);
        assert!((g.w1[(0, 0)] - 2.0 * dh).abs() < 1e-15);
    }

    #[test]
    fn adam_cases() {
        let mut p = ModelParams {
            w1: Matrix::from_vec(1, 1, vec![1.0]).unwrap(),
            b1: None,
            w2: Matrix::from_vec(1, 1, vec![-2.0]).unwrap(),
            b2: None,
        };
        let cfg = AdamConfig {
            lr: 0.1,
            weight_decay: 0.0,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg, &p);
        let before = p.clone();
        adam_step(&mut p, &before.zeros_like(), &mut st).unwrap();
        assert_eq!(p, before);
        assert_eq!(st.step(), 1);

        let mut g = before.zeros_like();
        g.w1[(0, 0)] = 1.0;
        let mut st = AdamState::new(cfg, &before);
        let mut q = before.clone();
        adam_step(&mut q, &g, &mut st).unwrap();
        // m̂ = 1, v̂ = 1 → Δ = -0.1 · 1 / (1 + 1e-8)
        let delta = q.w1[(0, 0)] - 1.0;
        assert!((delta + 0.1 / (1.0 + 1e-8)).abs() < 1e-15);
        assert_eq!(st.step(), 1);
    }

    #[test]
    fn decoupled_decay_shrinks_without_gradient() {
        let mut p = small_params(5);
        let cfg = AdamConfig {
            weight_decay: 0.1,
            decay_mode: WeightDecay::Decoupled,
            ..AdamConfig::default()
        };
        let mut st = AdamState::new(cfg, &p);
        let w = p.w1[(0, 0)];
        let zero = p.zeros_like();
        adam_step(&mut p, &zero, &mut st).unwrap();
        assert!((p.w1[(0, 0)] - w * (1.0 - 0.01 * 0.1)).abs() < 1e-15);
    }

    #[test]
    fn checkpoint_round_trip() {
        let p = small_params(9);
        assert_eq!(ModelParams::from_text(&p.to_text()).unwrap(), p);
        let nobias = ModelParams {
            b1: None,
            b2: None,
            ..p
        };
        assert_eq!(ModelParams::from_text(&nobias.to_text()).unwrap(), nobias);
        assert!(ModelParams::from_text("w1 2 2\n1 2\n").is_err());
    }

    #[test]
    fn eval_forward_is_deterministic_and_dropout_is_seeded() {
        let p = small_params(4);
        let x = small_input();
        let (a, _) = mlp_forward(&x, &p, Mode::Eval).unwrap();
        let (b, _) = mlp_forward(&x, &p, Mode::Eval).unwrap();
        assert_eq!(a, b);
        let mut r1 = substream(1, "d");
        let mut r2 = substream(1, "d");
        let (c, _) = mlp_forward(
            &x,
            &p,
            Mode::Train {
                dropout: 0.5,
                rng: &mut r1,
            },
        )
        .unwrap();
        let (d, _) = mlp_forward(
            &x,
            &p,
            Mode::Train {
                dropout: 0.5,
                rng: &mut r2,
            },
        )
        .unwrap();
        assert_eq!(c, d);
    }

    #[test]
    fn dropout_gradients_match_finite_differences() {
        // With a fixed mask the dropped network is smooth in the parameters.
        let p = small_params(6);
        let x = small_input();
        let a_hat = sym_normalize(&add_self_loops(&CsrGraph::from_edges(3, &[(0, 1), (1, 2)]).unwrap())).unwrap();
        let y = Matrix::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]).unwrap();
        let run = |q: &ModelParams| {
            let mut r = substream(77, "d");
            let (logits, trace) = gcn_forward(
                &x,
                &a_hat,
                q,
                Mode::Train {
                    dropout: 0.3,
                    rng: &mut r,
                },
            )
            .unwrap();
            let (loss, d) = soft_cross_entropy_with_grad(&logits, &y, &[1.0, 2.0, 1.0]).unwrap();
            (loss, trace, d)
        };
        let (_, trace, d) = run(&p);
        let grads = backward(trace, &p, &d).unwrap();
        let report = check_gradients(&p, &grads, 1e-5, |q| {
            let (loss, trace, _) = run(q);
            Ok(Evaluation {
                loss,
                relu_pattern: trace.relu_pattern(),
            })
        })
        .unwrap();
        assert!(report.max_rel_err < 1e-5, "{report:?}");
    }
}
