//! Finite-difference check of the training objectives on a small random graph.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::graphalg::{add_self_loops, sym_normalize};
use crate::graphio::{Dataset, SplitSpec};
use crate::matrix::Matrix;
use crate::mixup::{
    build_batches, compute_nld, nodemixup_loss, sample_pairs, MixupConfig, PseudoLabelSet, Supervision,
};
use crate::nn::{check_gradients, Evaluation, GradCheckReport, ModelParams};
use crate::rng::{self, substream};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToyGraph {
    pub nodes: usize,
    pub features: usize,
    pub hidden: usize,
    pub classes: usize,
    pub edge_prob: f64,
    pub seed: u64,
}

impl Default for ToyGraph {
    fn default() -> Self {
        Self {
            nodes: 8,
            features: 5,
            hidden: 6,
            classes: 3,
            edge_prob: 0.35,
            seed: 0,
        }
    }
}

impl ToyGraph {
    /// Random graph with Gaussian-ish features, label `i mod classes`, and
    /// the first `classes` nodes labeled.
    pub fn dataset(&self) -> Result<Dataset> {
        let mut r = substream(self.seed, "gradcheck-graph");
        let mut edges = Vec::new();
        for u in 0..self.nodes {
            for v in u + 1..self.nodes {
                if r.random::<f64>() < self.edge_prob {
                    edges.push((u, v));
                }
            }
        }
        let data = (0..self.nodes * self.features)
            .map(|_| r.random::<f64>() * 2.0 - 1.0)
            .collect();
        let features = Matrix::from_vec(self.nodes, self.features, data)?;
        let labels: Vec<usize> = (0..self.nodes).map(|i| i % self.classes).collect();
        let labeled: Vec<usize> = (0..self.classes.min(self.nodes)).collect();
        let split = SplitSpec {
            labeled,
            valid: vec![],
            test: vec![],
        };
        Dataset::new(self.classes, edges, features, labels, split)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradCheckOutcome {
    /// GCN cross-entropy on labeled nodes.
    pub supervised: GradCheckReport,
    /// Full NodeMixup objective with both mixed branches populated.
    pub nodemixup: GradCheckReport,
}

impl GradCheckOutcome {
    pub fn max_rel_err(&self) -> f64 {
        self.supervised.max_rel_err.max(self.nodemixup.max_rel_err)
    }
}

/// Central-difference check, in eval mode, of both the supervised GCN loss
/// and the combined NodeMixup loss. Unlabeled nodes act as pseudo-labeled
/// partners carrying their true class.
pub fn run_gradcheck(toy: &ToyGraph, eps: f64) -> Result<GradCheckOutcome> {
    let d = toy.dataset()?;
    let params = ModelParams::glorot(
        toy.features,
        toy.hidden,
        toy.classes,
        true,
        &mut substream(toy.seed, rng::INIT),
    );
    let adjacency = add_self_loops(&d.graph());
    let a_hat = sym_normalize(&adjacency)?;
    let labeled = d.split().labeled.clone();
    let targets = d.one_hot(&labeled);
    let sup = Supervision {
        features: d.features(),
        a_hat: &a_hat,
        labeled: &labeled,
        targets: &targets,
    };
    let cfg = MixupConfig {
        lambda_intra: 1.2,
        lambda_inter: 0.8,
        ..MixupConfig::default()
    };

    let check = |batches| {
        let obj = nodemixup_loss(&params, &sup, batches, &cfg, None)?;
        check_gradients(&params, &obj.grads, eps, |p| {
            let o = nodemixup_loss(p, &sup, batches, &cfg, None)?;
            Ok(Evaluation {
                loss: o.losses.total,
                relu_pattern: o.relu_pattern,
            })
        })
    };
    let supervised = check(None)?;

    let unlabeled = d.unlabeled_ids();
    let dpl = PseudoLabelSet {
        labels: unlabeled.iter().map(|&i| d.labels()[i]).collect(),
        confidences: vec![1.0; unlabeled.len()],
        nodes: unlabeled,
    };
    let nld = compute_nld(&adjacency, &d.one_hot(&(0..d.num_nodes()).collect::<Vec<_>>()), true)?;
    let labeled_labels: Vec<usize> = labeled.iter().map(|&i| d.labels()[i]).collect();
    let pairs = sample_pairs(
        &labeled,
        &labeled_labels,
        &dpl,
        &nld,
        &cfg,
        &d.graph().structural_degrees(),
        &mut substream(toy.seed, rng::PAIRS),
        &mut substream(toy.seed, rng::LAMBDA),
    )?;
    let mut slots = vec![None; d.num_nodes()];
    for (&i, &l) in labeled.iter().zip(&labeled_labels) {
        slots[i] = Some(l);
    }
    let batches = build_batches(d.features(), &slots, toy.classes, &dpl, pairs, &adjacency)?;
    let nodemixup = check(Some(&batches))?;
    Ok(GradCheckOutcome { supervised, nodemixup })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_toy_passes() {
        let out = run_gradcheck(&ToyGraph::default(), 1e-5).unwrap();
        assert!(out.max_rel_err() < 1e-5, "{out:?}");
        assert!(out.nodemixup.checked > 0);
    }

    #[test]
    fn planted_gradient_error_is_detected() {
        let toy = ToyGraph::default();
        let d = toy.dataset().unwrap();
        let params = ModelParams::glorot(5, 6, 3, true, &mut substream(0, rng::INIT));
        let a_hat = sym_normalize(&add_self_loops(&d.graph())).unwrap();
        let labeled = d.split().labeled.clone();
        let targets = d.one_hot(&labeled);
        let sup = Supervision {
            features: d.features(),
            a_hat: &a_hat,
            labeled: &labeled,
            targets: &targets,
        };
        let cfg = MixupConfig::default();
        let mut wrong = nodemixup_loss(&params, &sup, None, &cfg, None).unwrap().grads;
        wrong.w2[(0, 0)] *= 1.01;
        let report = check_gradients(&params, &wrong, 1e-5, |p| {
            let o = nodemixup_loss(p, &sup, None, &cfg, None)?;
            Ok(Evaluation {
                loss: o.losses.total,
                relu_pattern: o.relu_pattern,
            })
        })
        .unwrap();
        assert!(report.max_rel_err > 5e-3);
        assert_eq!((report.worst_tensor.as_str(), report.worst_index), ("w2", 0));
    }

    #[test]
    fn coarse_step_is_worse_but_bounded() {
        let fine = run_gradcheck(&ToyGraph::default(), 1e-5).unwrap().max_rel_err();
        let coarse = run_gradcheck(&ToyGraph::default(), 1e-3).unwrap().max_rel_err();
        assert!(coarse >= fine && coarse < 1e-2, "{fine} {coarse}");
    }
}
