//! Training loop for the GCN baseline and NodeMixup, multi-seed aggregation
//! and hyperparameter grid search.
//!
//! Training only ever sees labeled and validation labels: [`train_one`]
//! builds a [`TrainingView`] that carries no test labels, and test accuracy is
//! computed afterwards from the restored best parameters.

use std::fmt::Write as _;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graphalg::{add_self_loops, sym_normalize, CsrGraph};
use crate::graphio::Dataset;
use crate::matrix::Matrix;
use crate::mixup::{
    build_batches, build_pseudo_labels, compute_nld, nld_label_matrix, nodemixup_loss, sample_pairs, validate_batches,
    BranchRngs, LossBreakdown, MixupBatches, MixupConfig, NldTable, PseudoLabelSet, Supervision,
};
use crate::nn::{
    adam_step, forward, masked_cross_entropy, AdamConfig, AdamState, Mode, ModelParams, Propagation, WeightDecay,
};
use crate::rng::{self, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub hidden: usize,
    pub dropout: f64,
    pub lr: f64,
    pub weight_decay: f64,
    pub decay_mode: WeightDecay,
    pub bias: bool,
    pub max_epochs: usize,
    pub patience: usize,
    pub mixup_enabled: bool,
    pub mixup: MixupConfig,
    pub seeds: Vec<u64>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        let adam = AdamConfig::default();
        Self {
            hidden: 64,
            dropout: 0.5,
            lr: adam.lr,
            weight_decay: adam.weight_decay,
            decay_mode: adam.decay_mode,
            bias: true,
            max_epochs: 400,
            patience: 100,
            mixup_enabled: false,
            mixup: MixupConfig::default(),
            seeds: (0..10).collect(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.hidden == 0 {
            return bad("hidden size must be >= 1".into());
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) || !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("invalid lr {} or weight decay {}", self.lr, self.weight_decay));
        }
        // Patience beyond max_epochs simply never triggers.
        if self.max_epochs == 0 || self.patience == 0 {
            return bad(format!(
                "need max_epochs >= 1 and patience >= 1 (got {} and {})",
                self.max_epochs, self.patience
            ));
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        self.mixup.validate()
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            decay_mode: self.decay_mode,
            ..AdamConfig::default()
        }
    }
}

/// Everything training may look at. Test labels are not part of it.
pub struct TrainingView {
    pub features: Matrix,
    pub num_classes: usize,
    /// Structural adjacency with self-loops, unnormalized.
    pub adjacency: CsrGraph,
    pub a_hat: CsrGraph,
    pub degrees: Vec<usize>,
    pub labeled: Vec<usize>,
    pub labeled_labels: Vec<usize>,
    pub labeled_targets: Matrix,
    pub valid: Vec<usize>,
    pub valid_labels: Vec<usize>,
    pub valid_targets: Matrix,
}

impl TrainingView {
    pub fn new(dataset: &Dataset) -> Result<Self> {
        let split = dataset.split();
        if split.valid.is_empty() {
            return Err(Error::InvalidArgument(
                "training needs a non-empty validation set".into(),
            ));
        }
        let graph = dataset.graph();
        let adjacency = add_self_loops(&graph);
        let a_hat = sym_normalize(&adjacency)?;
        let pick = |ids: &[usize]| ids.iter().map(|&i| dataset.labels()[i]).collect::<Vec<_>>();
        Ok(Self {
            features: dataset.features().clone(),
            num_classes: dataset.num_classes(),
            degrees: graph.structural_degrees(),
            adjacency,
            a_hat,
            labeled_labels: pick(&split.labeled),
            labeled_targets: dataset.one_hot(&split.labeled),
            labeled: split.labeled.clone(),
            valid_labels: pick(&split.valid),
            valid_targets: dataset.one_hot(&split.valid),
            valid: split.valid.clone(),
        })
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    /// True labels of labeled nodes, `None` for everything else.
    pub fn label_slots(&self) -> Vec<Option<usize>> {
        let mut out = vec![None; self.num_nodes()];
        for (&i, &l) in self.labeled.iter().zip(&self.labeled_labels) {
            out[i] = Some(l);
        }
        out
    }

    pub fn predict(&self, params: &ModelParams) -> Result<Matrix> {
        forward(&self.features, Propagation::Graph(&self.a_hat), params, Mode::Eval).map(|(l, _)| l)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochMetrics {
    pub epoch: usize,
    pub loss: f64,
    pub loss_gnn: f64,
    pub loss_intra: f64,
    pub loss_inter: f64,
    pub train_acc: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub pseudo_labeled: usize,
    pub intra_pairs: usize,
    pub inter_pairs: usize,
    pub refreshed: bool,
}

pub fn metrics_to_tsv(history: &[EpochMetrics]) -> String {
    let mut out = String::from(
        "epoch\tloss\tloss_gnn\tloss_intra\tloss_inter\ttrain_acc\tval_loss\tval_acc\tpseudo_labeled\tintra_pairs\tinter_pairs\trefreshed\n",
    );
    for m in history {
        let _ = writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            m.epoch,
            m.loss,
            m.loss_gnn,
            m.loss_intra,
            m.loss_inter,
            m.train_acc,
            m.val_loss,
            m.val_acc,
            m.pseudo_labeled,
            m.intra_pairs,
            m.inter_pairs,
            u8::from(m.refreshed)
        );
    }
    out
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub seed: u64,
    /// Parameters at the best validation epoch.
    pub params: ModelParams,
    pub best_epoch: usize,
    pub best_val_acc: f64,
    pub best_val_loss: f64,
    pub history: Vec<EpochMetrics>,
    /// Wall-clock seconds per epoch; kept apart from `history` so metrics
    /// stay reproducible.
    pub epoch_seconds: Vec<f64>,
    /// Number of mixed batches built and validated.
    pub batches_checked: usize,
}

pub fn accuracy(logits: &Matrix, ids: &[usize], labels: &[usize]) -> f64 {
    if ids.is_empty() {
        return 0.0;
    }
    let hits = ids
        .iter()
        .zip(labels)
        .filter(|(&i, &l)| crate::matrix::argmax(logits.row(i)) == l)
        .count();
    hits as f64 / ids.len() as f64
}

/// Pseudo-labels, NLDs and the batches currently in use.
struct MixupState {
    dpl: PseudoLabelSet,
    nld: NldTable,
    batches: Option<MixupBatches>,
}

pub fn train_one(dataset: &Dataset, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let view = TrainingView::new(dataset)?;
    train_view(&view, cfg, seed)
}

pub fn train_view(view: &TrainingView, cfg: &TrainConfig, seed: u64) -> Result<TrainOutcome> {
    cfg.validate()?;
    let mut params = ModelParams::glorot(
        view.features.cols(),
        cfg.hidden,
        view.num_classes,
        cfg.bias,
        &mut substream(seed, rng::INIT),
    );
    let mut adam = AdamState::new(cfg.adam(), &params);
    let mut rngs = BranchRngs {
        gnn: substream(seed, rng::DROPOUT),
        intra: substream(seed, rng::DROPOUT_INTRA),
        inter: substream(seed, rng::DROPOUT_INTER),
    };
    let mut pair_rng = substream(seed, rng::PAIRS);
    let mut lambda_rng = substream(seed, rng::LAMBDA);
    let label_slots = view.label_slots();
    let sup = Supervision {
        features: &view.features,
        a_hat: &view.a_hat,
        labeled: &view.labeled,
        targets: &view.labeled_targets,
    };
    let mx = &cfg.mixup;

    let mut state: Option<MixupState> = None;
    let mut history = Vec::new();
    let mut epoch_seconds = Vec::new();
    let mut batches_checked = 0;
    let mut best = (params.clone(), 0usize, f64::NEG_INFINITY, f64::INFINITY);
    let mut stale = 0usize;

    for epoch in 0..cfg.max_epochs {
        let started = Instant::now();
        let active = cfg.mixup_enabled && epoch >= mx.warmup_epochs;
        let since = epoch.saturating_sub(mx.warmup_epochs);
        let refresh = active && since % mx.refresh_every == 0;
        // A refresh invalidates the previous pairs, so it always redraws them.
        let redraw = active && (refresh || since % mx.pair_interval() == 0);

        if refresh {
            let probs = view.predict(&params)?.softmax_rows();
            let dpl = build_pseudo_labels(&probs, &view.labeled, mx.gamma);
            let ybar = nld_label_matrix(&probs, &view.labeled, &view.labeled_labels, mx.soft_nld);
            let nld = compute_nld(&view.adjacency, &ybar, mx.nld_include_self)?;
            state = Some(MixupState {
                dpl,
                nld,
                batches: None,
            });
        }
        if redraw {
            let st = state.as_mut().expect("a refresh precedes the first redraw");
            let pairs = sample_pairs(
                &view.labeled,
                &view.labeled_labels,
                &st.dpl,
                &st.nld,
                mx,
                &view.degrees,
                &mut pair_rng,
                &mut lambda_rng,
            )?;
            let batches = build_batches(
                &view.features,
                &label_slots,
                view.num_classes,
                &st.dpl,
                pairs,
                &view.adjacency,
            )?;
            validate_batches(&batches, &label_slots, &st.dpl, mx.gamma)?;
            batches_checked += 1;
            st.batches = Some(batches);
        }

        let batches = if active {
            state.as_ref().and_then(|s| s.batches.as_ref())
        } else {
            None
        };
        let objective = nodemixup_loss(&params, &sup, batches, mx, Some((cfg.dropout, &mut rngs)))
            .map_err(|e| Error::NonFinite(format!("epoch {epoch}: {e}")))?;
        adam_step(&mut params, &objective.grads, &mut adam)?;
        if !params.is_finite() {
            return Err(Error::NonFinite(format!("epoch {epoch}: parameters diverged")));
        }

        let logits = view.predict(&params)?;
        let (val_loss, _) = masked_cross_entropy(&logits, &view.valid, &view.valid_targets)?;
        let val_acc = accuracy(&logits, &view.valid, &view.valid_labels);
        let LossBreakdown {
            total,
            gnn,
            intra,
            inter,
        } = objective.losses;
        history.push(EpochMetrics {
            epoch,
            loss: total,
            loss_gnn: gnn,
            loss_intra: intra,
            loss_inter: inter,
            train_acc: accuracy(&logits, &view.labeled, &view.labeled_labels),
            val_loss,
            val_acc,
            pseudo_labeled: if active {
                state.as_ref().map_or(0, |s| s.dpl.len())
            } else {
                0
            },
            intra_pairs: batches.map_or(0, |b| b.pairs.intra.len()),
            inter_pairs: batches.map_or(0, |b| b.pairs.inter.len()),
            refreshed: refresh,
        });

        if val_acc > best.2 || (val_acc == best.2 && val_loss < best.3) {
            best = (params.clone(), epoch, val_acc, val_loss);
            stale = 0;
        } else {
            stale += 1;
        }
        epoch_seconds.push(started.elapsed().as_secs_f64());
        if stale >= cfg.patience {
            log::debug!("seed {seed}: early stop at epoch {epoch}, best epoch {}", best.1);
            break;
        }
    }

    let (params, best_epoch, best_val_acc, best_val_loss) = best;
    Ok(TrainOutcome {
        seed,
        params,
        best_epoch,
        best_val_acc,
        best_val_loss,
        history,
        epoch_seconds,
        batches_checked,
    })
}

/// Accuracy of `params` on `ids` in eval mode. This is the only place test
/// labels are read.
pub fn evaluate(dataset: &Dataset, params: &ModelParams, ids: &[usize]) -> Result<f64> {
    let a_hat = sym_normalize(&add_self_loops(&dataset.graph()))?;
    let (logits, _) = forward(dataset.features(), Propagation::Graph(&a_hat), params, Mode::Eval)?;
    let labels: Vec<usize> = ids.iter().map(|&i| dataset.labels()[i]).collect();
    Ok(accuracy(&logits, ids, &labels))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `std / sqrt(n)`.
    pub stderr: f64,
    pub n: usize,
}

impl Summary {
    pub fn of(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self {
                mean: f64::NAN,
                std: f64::NAN,
                stderr: f64::NAN,
                n,
            };
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let std = (values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64).sqrt();
        Self {
            mean,
            std,
            stderr: std / (n as f64).sqrt(),
            n,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedResult {
    pub seed: u64,
    pub test_acc: f64,
    pub val_acc: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
}

#[derive(Debug, Clone)]
pub struct RunResult {
    /// Sorted by seed.
    pub per_seed: Vec<SeedResult>,
    pub test: Summary,
    pub val: Summary,
    /// Outcomes in the same order as `per_seed`.
    pub outcomes: Vec<TrainOutcome>,
}

fn in_pool<T: Send>(jobs: usize, f: impl FnOnce() -> T + Send) -> Result<T> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| Error::InvalidArgument(format!("thread pool: {e}")))?;
    Ok(pool.install(f))
}

/// Trains every seed in `cfg.seeds` (up to `jobs` at a time) and evaluates the
/// restored best parameters on the test set.
pub fn train_multi(dataset: &Dataset, cfg: &TrainConfig, jobs: usize) -> Result<RunResult> {
    cfg.validate()?;
    let view = TrainingView::new(dataset)?;
    let mut seeds = cfg.seeds.clone();
    seeds.sort_unstable();
    let outcomes: Vec<TrainOutcome> = in_pool(jobs, || {
        seeds
            .par_iter()
            .map(|&s| train_view(&view, cfg, s))
            .collect::<Result<Vec<_>>>()
    })??;
    let test_ids = &dataset.split().test;
    let per_seed = outcomes
        .iter()
        .map(|o| {
            Ok(SeedResult {
                seed: o.seed,
                test_acc: evaluate(dataset, &o.params, test_ids)?,
                val_acc: o.best_val_acc,
                best_epoch: o.best_epoch,
                epochs_run: o.history.len(),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let test = Summary::of(&per_seed.iter().map(|r| r.test_acc).collect::<Vec<_>>());
    let val = Summary::of(&per_seed.iter().map(|r| r.val_acc).collect::<Vec<_>>());
    Ok(RunResult {
        per_seed,
        test,
        val,
        outcomes,
    })
}

/// Candidate values for the NodeMixup hyperparameters; the sweep is their
/// Cartesian product with `lambda_intra` varying slowest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub lambda_intra: Vec<f64>,
    pub lambda_inter: Vec<f64>,
    pub beta_s: Vec<f64>,
    pub beta_d: Vec<f64>,
    pub gamma: Vec<f64>,
}

impl GridSpec {
    /// Loss weights in {1, 1.1, …, 1.5}, β_s and β_d in {0.5, 1, 1.5, 2},
    /// γ in {0.5, 0.7, 0.9}.
    pub fn standard() -> Self {
        let weights: Vec<f64> = (10..=15).map(|k| f64::from(k) / 10.0).collect();
        let betas = vec![0.5, 1.0, 1.5, 2.0];
        Self {
            lambda_intra: weights.clone(),
            lambda_inter: weights,
            beta_s: betas.clone(),
            beta_d: betas,
            gamma: vec![0.5, 0.7, 0.9],
        }
    }

    pub fn single(cfg: &MixupConfig) -> Self {
        Self {
            lambda_intra: vec![cfg.lambda_intra],
            lambda_inter: vec![cfg.lambda_inter],
            beta_s: vec![cfg.beta_s],
            beta_d: vec![cfg.beta_d],
            gamma: vec![cfg.gamma],
        }
    }

    fn axes(&self) -> [&[f64]; 5] {
        [
            &self.lambda_intra,
            &self.lambda_inter,
            &self.beta_s,
            &self.beta_d,
            &self.gamma,
        ]
    }

    pub fn len(&self) -> usize {
        self.axes().iter().map(|a| a.len()).product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Grid points in lexicographic order.
    pub fn points(&self, base: &MixupConfig) -> Vec<MixupConfig> {
        let mut out = Vec::with_capacity(self.len());
        for &li in &self.lambda_intra {
            for &le in &self.lambda_inter {
                for &bs in &self.beta_s {
                    for &bd in &self.beta_d {
                        for &g in &self.gamma {
                            out.push(MixupConfig {
                                lambda_intra: li,
                                lambda_inter: le,
                                beta_s: bs,
                                beta_d: bd,
                                gamma: g,
                                ..base.clone()
                            });
                        }
                    }
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridRow {
    pub index: usize,
    pub lambda_intra: f64,
    pub lambda_inter: f64,
    pub beta_s: f64,
    pub beta_d: f64,
    pub gamma: f64,
    pub val: Summary,
}

#[derive(Debug, Clone)]
pub struct GridResult {
    pub rows: Vec<GridRow>,
    pub best_index: usize,
    pub best_config: TrainConfig,
    /// The best point retrained and evaluated on the test set.
    pub best_run: RunResult,
}

impl GridResult {
    pub fn to_tsv(&self) -> String {
        let mut out = String::from("index\tlambda_intra\tlambda_inter\tbeta_s\tbeta_d\tgamma\tval_mean\tval_std\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
                r.index, r.lambda_intra, r.lambda_inter, r.beta_s, r.beta_d, r.gamma, r.val.mean, r.val.std
            );
        }
        out
    }
}

/// Exhaustive sweep over `grid` with mixup enabled. Points are ranked by mean
/// validation accuracy over `base.seeds`; ties go to the earliest point. Only
/// the winner is evaluated on the test set.
pub fn grid_search(dataset: &Dataset, base: &TrainConfig, grid: &GridSpec, jobs: usize) -> Result<GridResult> {
    if grid.is_empty() {
        return Err(Error::InvalidArgument("grid has an empty axis".into()));
    }
    base.validate()?;
    let view = TrainingView::new(dataset)?;
    let configs: Vec<TrainConfig> = grid
        .points(&base.mixup)
        .into_iter()
        .map(|m| TrainConfig {
            mixup_enabled: true,
            mixup: m,
            ..base.clone()
        })
        .collect();
    let mut seeds = base.seeds.clone();
    seeds.sort_unstable();
    let jobs_list: Vec<(usize, u64)> = (0..configs.len())
        .flat_map(|p| seeds.iter().map(move |&s| (p, s)))
        .collect();
    let vals: Vec<f64> = in_pool(jobs, || {
        jobs_list
            .par_iter()
            .map(|&(p, s)| train_view(&view, &configs[p], s).map(|o| o.best_val_acc))
            .collect::<Result<Vec<_>>>()
    })??;

    let rows: Vec<GridRow> = configs
        .iter()
        .enumerate()
        .map(|(p, c)| GridRow {
            index: p,
            lambda_intra: c.mixup.lambda_intra,
            lambda_inter: c.mixup.lambda_inter,
            beta_s: c.mixup.beta_s,
            beta_d: c.mixup.beta_d,
            gamma: c.mixup.gamma,
            val: Summary::of(&vals[p * seeds.len()..(p + 1) * seeds.len()]),
        })
        .collect();
    let mut best_index = 0;
    for r in &rows {
        if r.val.mean > rows[best_index].val.mean {
            best_index = r.index;
        }
    }
    let best_config = configs[best_index].clone();
    let best_run = train_multi(dataset, &best_config, jobs)?;
    Ok(GridResult {
        rows,
        best_index,
        best_config,
        best_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graphio::{generate_sbm, SbmConfig};

    fn small() -> Dataset {
        generate_sbm(&SbmConfig {
            num_classes: 3,
            nodes_per_class: 30,
            p_in: 0.2,
            p_out: 0.02,
            feature_dim: 6,
            feature_noise: 1.0,
            seed: 3,
            labels_per_class: 4,
            valid_per_class: 6,
        })
        .unwrap()
    }

    fn quick(mixup: bool) -> TrainConfig {
        TrainConfig {
            hidden: 8,
            max_epochs: 30,
            patience: 10,
            mixup_enabled: mixup,
            mixup: MixupConfig {
                warmup_epochs: 3,
                gamma: 0.5,
                ..MixupConfig::default()
            },
            seeds: vec![0],
            ..TrainConfig::default()
        }
    }

    #[test]
    fn baseline_reports_supervised_loss_only() {
        let o = train_one(&small(), &quick(false), 1).unwrap();
        assert!(o
            .history
            .iter()
            .all(|m| m.loss == m.loss_gnn && m.loss_intra == 0.0 && m.loss_inter == 0.0));
        assert_eq!(o.batches_checked, 0);
    }

    #[test]
    fn zero_weights_match_baseline_exactly() {
        let d = small();
        let base = train_one(&d, &quick(false), 5).unwrap();
        let mut cfg = quick(true);
        cfg.mixup.lambda_intra = 0.0;
        cfg.mixup.lambda_inter = 0.0;
        let mixed = train_one(&d, &cfg, 5).unwrap();
        assert!(mixed.batches_checked > 0);
        assert_eq!(base.history.len(), mixed.history.len());
        for (a, b) in base.history.iter().zip(&mixed.history) {
            assert_eq!(a.loss, b.loss);
            assert_eq!(a.val_acc, b.val_acc);
        }
        assert_eq!(base.params, mixed.params);
    }

    #[test]
    fn mixup_run_uses_both_branches_and_is_deterministic() {
        let d = small();
        let a = train_one(&d, &quick(true), 2).unwrap();
        let b = train_one(&d, &quick(true), 2).unwrap();
        assert_eq!(a.history, b.history);
        assert!(a.history.iter().any(|m| m.intra_pairs > 0 && m.inter_pairs > 0));
        assert!(a.history[..3].iter().all(|m| m.intra_pairs == 0));
    }

    #[test]
    fn early_stopping_restores_best_parameters() {
        let d = small();
        let o = train_one(&d, &quick(false), 0).unwrap();
        let view = TrainingView::new(&d).unwrap();
        let logits = view.predict(&o.params).unwrap();
        assert_eq!(accuracy(&logits, &view.valid, &view.valid_labels), o.best_val_acc);
        let best = o.history.iter().map(|m| m.val_acc).fold(0.0, f64::max);
        assert_eq!(o.best_val_acc, best);
        assert!(o.history.len() <= o.best_epoch + 1 + 10);
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[0.8]);
        assert_eq!((s.mean, s.std), (0.8, 0.0));
        let s = Summary::of(&[0.7, 0.9]);
        assert!((s.std - 0.1).abs() < 1e-12);
        assert!((s.stderr - 0.1 / 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn seed_order_does_not_matter() {
        let d = small();
        let mut cfg = quick(false);
        cfg.seeds = vec![3, 1, 2];
        let a = train_multi(&d, &cfg, 2).unwrap();
        cfg.seeds = vec![2, 3, 1];
        let b = train_multi(&d, &cfg, 1).unwrap();
        assert_eq!(a.test, b.test);
        assert_eq!(a.per_seed, b.per_seed);
    }

    #[test]
    fn grid_sizes_and_selection() {
        assert_eq!(GridSpec::standard().len(), 1728);
        assert_eq!(GridSpec::standard().lambda_intra, vec![1.0, 1.1, 1.2, 1.3, 1.4, 1.5]);
        let d = small();
        let cfg = quick(true);
        let single = grid_search(&d, &cfg, &GridSpec::single(&cfg.mixup), 1).unwrap();
        assert_eq!(single.rows.len(), 1);
        assert_eq!(single.best_config.mixup, cfg.mixup);

        // Identical points tie; the first one wins.
        let tie = GridSpec {
            gamma: vec![0.5, 0.5],
            ..GridSpec::single(&cfg.mixup)
        };
        assert_eq!(grid_search(&d, &cfg, &tie, 2).unwrap().best_index, 0);
    }

    #[test]
    fn config_checks() {
        assert!(TrainConfig::default().validate().is_ok());
        assert!(TrainConfig {
            seeds: vec![],
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            patience: 0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            patience: 500,
            ..TrainConfig::default()
        }
        .validate()
        .is_ok());
        assert!(TrainConfig {
            dropout: 1.0,
            ..TrainConfig::default()
        }
        .validate()
        .is_err());
        let parsed: TrainConfig = serde_json::from_str(r#"{"hidden": 16, "mixup": {"gamma": 0.9}}"#).unwrap();
        assert_eq!(parsed.hidden, 16);
        assert_eq!(parsed.mixup.gamma, 0.9);
        assert_eq!(parsed.mixup.tau, 0.5);
        assert!(serde_json::from_str::<TrainConfig>(r#"{"hiden": 16}"#).is_err());
    }
}
