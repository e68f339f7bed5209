//! Metrics, the deep-KNN baselines, and the random-noise robustness sweep.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::sync::Arc;

use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment, Augmentation};
use crate::autodiff::{Tape, Var};
use crate::datagen::GroundTruth;
use crate::encoder::{encode_nodes, EncoderParams};
use crate::error::{contract, Result};
use crate::explain::{argmax, edge_importance, k_nearest_labeled, predict, NeighborSet};
use crate::graph::{normalize_adjacency, Graph, SubgraphIndex};
use crate::optim::{AdamConfig, AdamState, Param};
use crate::similarity::{EdgeMatching, Scorer};
use crate::tensor::{xavier_init, Tensor};
use crate::training::{train, TrainConfig};

pub fn classification_accuracy(predicted: &[usize], truth: &[usize]) -> Result<f64> {
    if predicted.is_empty() {
        return contract("accuracy over an empty node set");
    }
    if predicted.len() != truth.len() {
        return contract("prediction and label counts differ");
    }
    let correct = predicted.iter().zip(truth).filter(|(a, b)| a == b).count();
    Ok(correct as f64 / predicted.len() as f64)
}

/// Mean over targets of the fraction of the top-`k` ranked labels equal to
/// the target's label, for each `k`.
pub fn precision_at_k(
    target_labels: &[usize],
    ranked_labels: &[Vec<usize>],
    ks: &[usize],
) -> Result<BTreeMap<usize, f64>> {
    if target_labels.is_empty() || target_labels.len() != ranked_labels.len() {
        return contract("precision@k needs one ranking per target");
    }
    let max_k = ks.iter().copied().max().unwrap_or(0);
    if ranked_labels.iter().any(|r| r.len() < max_k) || ks.contains(&0) {
        return contract(format!("every ranking must cover k = 1..{max_k}"));
    }
    Ok(ks
        .iter()
        .map(|&k| {
            let total: f64 = target_labels
                .iter()
                .zip(ranked_labels)
                .map(|(&t, r)| r[..k].iter().filter(|&&l| l == t).count() as f64 / k as f64)
                .sum();
            (k, total / target_labels.len() as f64)
        })
        .collect())
}

/// Fraction of scorable matched pairs whose matched edge is the
/// ground-truth counterpart. A pair is scorable when its target edge has a
/// source edge and the candidate's subgraph holds a copy of that source.
pub fn edge_matching_accuracy(
    matchings: &[EdgeMatching],
    index: &SubgraphIndex,
    gt: &GroundTruth,
) -> Result<f64> {
    let source = gt.source_of();
    let mut scorable = 0usize;
    let mut correct = 0usize;
    for m in matchings {
        let available: BTreeSet<(usize, usize)> = index
            .get(m.candidate)
            .edges
            .iter()
            .filter_map(|e| source.get(e).copied())
            .collect();
        for p in &m.pairs {
            let Some(s) = source.get(&p.target_edge) else {
                continue;
            };
            if !available.contains(s) {
                continue;
            }
            scorable += 1;
            if source.get(&p.candidate_edge) == Some(s) {
                correct += 1;
            }
        }
    }
    if scorable == 0 {
        return contract("no scorable edge pairs for edge matching accuracy");
    }
    Ok(correct as f64 / scorable as f64)
}

/// Matchings of every twin-grouped target against its labeled twins.
pub fn twin_matchings(
    scorer: &Scorer,
    gt: &GroundTruth,
    targets: &[usize],
    labeled: &[usize],
) -> Vec<EdgeMatching> {
    let group = gt.group_of();
    let labeled: BTreeSet<usize> = labeled.iter().copied().collect();
    targets
        .par_iter()
        .flat_map_iter(|&t| {
            let twins: Vec<usize> = group
                .get(&t)
                .map(|&i| {
                    gt.twin_groups[i]
                        .iter()
                        .copied()
                        .filter(|v| *v != t && labeled.contains(v))
                        .collect()
                })
                .unwrap_or_default();
            scorer
                .score_against(t, &twins)
                .into_iter()
                .map(move |p| scorer.matching(t, &p))
        })
        .collect()
}

/// Pairwise ROC AUC with half credit for ties; `None` when only one class
/// is present.
pub fn explanation_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let pos: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| t).map(|(&s, _)| s).collect();
    let neg: Vec<f64> = scores.iter().zip(truth).filter(|(_, &t)| !t).map(|(&s, _)| s).collect();
    if pos.is_empty() || neg.is_empty() {
        return None;
    }
    let mut credit = 0.0;
    for &p in &pos {
        for &n in &neg {
            if p > n {
                credit += 1.0;
            } else if p == n {
                credit += 0.5;
            }
        }
    }
    Some(credit / (pos.len() * neg.len()) as f64)
}

/// One run's metrics.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision_at_k: BTreeMap<usize, f64>,
    pub edge_acc: Option<f64>,
    pub explanation_auc: Option<f64>,
}

/// Per-seed reports with their mean and (for two or more seeds) sample
/// standard deviation.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsSummary {
    pub seeds: Vec<u64>,
    pub runs: Vec<MetricsReport>,
    pub mean: MetricsReport,
    pub std: Option<MetricsReport>,
}

fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = if values.len() > 1 {
        values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)
    } else {
        0.0
    };
    (mean, var.sqrt())
}

impl MetricsSummary {
    pub fn new(seeds: Vec<u64>, runs: Vec<MetricsReport>) -> Result<Self> {
        if runs.is_empty() || seeds.len() != runs.len() {
            return contract("summary needs one report per seed");
        }
        let stat = |f: &dyn Fn(&MetricsReport) -> Option<f64>| -> Option<(f64, f64)> {
            let v: Option<Vec<f64>> = runs.iter().map(f).collect();
            v.map(|v| mean_std(&v))
        };
        let acc = stat(&|r| Some(r.accuracy)).expect("always present");
        let edge = stat(&|r| r.edge_acc);
        let auc = stat(&|r| r.explanation_auc);
        let mut pk_mean = BTreeMap::new();
        let mut pk_std = BTreeMap::new();
        for &k in runs[0].precision_at_k.keys() {
            if let Some((m, s)) = stat(&|r| r.precision_at_k.get(&k).copied()) {
                pk_mean.insert(k, m);
                pk_std.insert(k, s);
            }
        }
        let mean = MetricsReport {
            accuracy: acc.0,
            precision_at_k: pk_mean,
            edge_acc: edge.map(|x| x.0),
            explanation_auc: auc.map(|x| x.0),
        };
        let std = (runs.len() >= 2).then(|| MetricsReport {
            accuracy: acc.1,
            precision_at_k: pk_std,
            edge_acc: edge.map(|x| x.1),
            explanation_auc: auc.map(|x| x.1),
        });
        Ok(MetricsSummary {
            seeds,
            runs,
            mean,
            std,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    PrecisionAtK,
    EdgeAcc,
    Auc,
}

impl Metric {
    pub fn parse(s: &str) -> Option<Metric> {
        match s {
            "accuracy" => Some(Metric::Accuracy),
            "precision" | "precision_at_k" => Some(Metric::PrecisionAtK),
            "edge_acc" => Some(Metric::EdgeAcc),
            "auc" | "explanation_auc" => Some(Metric::Auc),
            _ => None,
        }
    }

    pub fn needs_ground_truth(self) -> bool {
        matches!(self, Metric::EdgeAcc | Metric::Auc)
    }
}

pub const PRECISION_KS: [usize; 8] = [1, 2, 3, 4, 5, 6, 7, 8];

/// Scores a trained encoder on the test mask. Accuracy is always computed.
pub fn evaluate_model(
    g: &Graph,
    params: &EncoderParams,
    cfg: &TrainConfig,
    gt: Option<&GroundTruth>,
    metrics: &[Metric],
) -> Result<MetricsReport> {
    if metrics.iter().any(|m| m.needs_ground_truth()) && gt.is_none() {
        return contract("edge_acc and auc need ground truth");
    }
    let emb = encode_nodes(g, &normalize_adjacency(g), params)?;
    let index = SubgraphIndex::build(g, cfg.hop, cfg.max_subgraph_edges)?;
    let scorer = Scorer::new(g, &index, &emb.h, cfg.lambda)?;
    let labeled = g.train_nodes();
    let test = g.test_nodes();
    let want = |m| metrics.contains(&m);
    let depth = if want(Metric::PrecisionAtK) {
        cfg.k.max(PRECISION_KS[7])
    } else {
        cfg.k
    };
    let motif_edges: BTreeSet<(usize, usize)> = gt
        .map(|gt| gt.motif_edges.iter().copied().collect())
        .unwrap_or_default();
    let motif_nodes: BTreeSet<usize> = motif_edges.iter().flat_map(|&(u, v)| [u, v]).collect();
    let num_classes = g.num_classes();

    struct PerTarget {
        predicted: usize,
        ranked: Vec<usize>,
        auc: Option<f64>,
        evaluated: bool,
    }
    let per: Vec<PerTarget> = test
        .par_iter()
        .map(|&t| -> Result<PerTarget> {
            let ns = k_nearest_labeled(&scorer, t, &labeled, depth)?;
            let top = NeighborSet {
                target: t,
                neighbors: ns.neighbors[..cfg.k.min(ns.neighbors.len())].to_vec(),
            };
            let pred = predict(&top, num_classes, cfg.tau)?;
            let sub = index.get(t);
            let evaluated = want(Metric::Auc) && motif_nodes.contains(&t);
            let auc = if evaluated {
                let matchings: Vec<&EdgeMatching> = top.neighbors.iter().map(|n| &n.matching).collect();
                let imp = edge_importance(sub.edges.len(), &matchings)?;
                let truth: Vec<bool> = sub.edges.iter().map(|e| motif_edges.contains(e)).collect();
                explanation_auc(&imp, &truth)
            } else {
                None
            };
            Ok(PerTarget {
                predicted: pred.predicted_class,
                ranked: ns.neighbors.iter().map(|n| n.label).collect(),
                auc,
                evaluated,
            })
        })
        .collect::<Result<_>>()?;

    let truth: Vec<usize> = test.iter().map(|&v| g.label(v).unwrap_or(usize::MAX)).collect();
    let predicted: Vec<usize> = per.iter().map(|p| p.predicted).collect();
    let mut report = MetricsReport {
        accuracy: classification_accuracy(&predicted, &truth)?,
        ..MetricsReport::default()
    };
    if want(Metric::PrecisionAtK) {
        let ranked: Vec<Vec<usize>> = per.iter().map(|p| p.ranked.clone()).collect();
        report.precision_at_k = precision_at_k(&truth, &ranked, &PRECISION_KS)?;
    }
    if want(Metric::EdgeAcc) {
        let gt = gt.expect("checked");
        let matchings = twin_matchings(&scorer, gt, &test, &labeled);
        report.edge_acc = Some(edge_matching_accuracy(&matchings, &index, gt)?);
    }
    if want(Metric::Auc) {
        let skipped = per.iter().filter(|p| p.evaluated && p.auc.is_none()).count();
        if skipped > 0 {
            warn!("{skipped} targets skipped for AUC: single-class ground truth");
        }
        let aucs: Vec<f64> = per.iter().filter_map(|p| p.auc).collect();
        if aucs.is_empty() {
            return contract("no target qualifies for explanation AUC");
        }
        report.explanation_auc = Some(aucs.iter().sum::<f64>() / aucs.len() as f64);
    }
    Ok(report)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineVariant {
    MlpK,
    GcnK,
}

impl BaselineVariant {
    pub fn name(self) -> &'static str {
        match self {
            BaselineVariant::MlpK => "mlp_k",
            BaselineVariant::GcnK => "gcn_k",
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaselineConfig {
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        BaselineConfig {
            hidden: 64,
            lr: 0.01,
            weight_decay: 5e-4,
            max_epochs: 200,
            patience: 30,
            seed: 0,
        }
    }
}

/// Two-layer classifier whose output layer drives cosine retrieval.
#[derive(Clone, Debug, PartialEq)]
pub struct BaselineModel {
    pub variant: BaselineVariant,
    pub w1: Param,
    pub b1: Param,
    pub w2: Param,
    pub b2: Param,
}

impl BaselineModel {
    fn params_mut(&mut self) -> [&mut Param; 4] {
        [&mut self.w1, &mut self.b1, &mut self.w2, &mut self.b2]
    }

    fn forward(&self, tape: &mut Tape, g: &Graph, trainable: bool) -> Result<(Var, [Var; 4])> {
        let adj = normalize_adjacency(g);
        let vars = [&self.w1, &self.b1, &self.w2, &self.b2].map(|p| tape.leaf(p.value.clone(), trainable));
        let x = tape.constant(g.features().clone());
        let propagate = |tape: &mut Tape, v: Var| -> Result<Var> {
            match self.variant {
                BaselineVariant::GcnK => tape.sparse_matmul(adj.matrix().clone(), v),
                BaselineVariant::MlpK => Ok(v),
            }
        };
        let z = tape.matmul(x, vars[0])?;
        let z = propagate(tape, z)?;
        let z = tape.add(z, vars[1])?;
        let a = tape.relu(z)?;
        let z = tape.matmul(a, vars[2])?;
        let z = propagate(tape, z)?;
        let out = tape.add(z, vars[3])?;
        Ok((out, vars))
    }

    /// Final-layer outputs of every node.
    pub fn embeddings(&self, g: &Graph) -> Result<Tensor> {
        let mut tape = Tape::new();
        let (out, _) = self.forward(&mut tape, g, false)?;
        Ok(tape.value(out).clone())
    }
}

fn split_accuracy(g: &Graph, logits: &Tensor, nodes: &[usize]) -> f64 {
    let correct = nodes
        .iter()
        .filter(|&&v| g.label(v) == Some(argmax(logits.row(v))))
        .count();
    correct as f64 / nodes.len().max(1) as f64
}

/// Cross-entropy training with early stopping on validation accuracy.
pub fn train_baseline(g: &Graph, variant: BaselineVariant, cfg: &BaselineConfig) -> Result<BaselineModel> {
    let c = g.num_classes();
    let f = g.feature_dim();
    let train_nodes = g.train_nodes();
    if train_nodes.is_empty() || c == 0 {
        return contract("baseline needs labeled training nodes");
    }
    let s = cfg.seed.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    let mut model = BaselineModel {
        variant,
        w1: Param::new(xavier_init(f, cfg.hidden, s.wrapping_add(11))?),
        b1: Param::new(Tensor::zeros(1, cfg.hidden)),
        w2: Param::new(xavier_init(cfg.hidden, c, s.wrapping_add(12))?),
        b2: Param::new(Tensor::zeros(1, c)),
    };
    let adam_cfg = AdamConfig {
        lr: cfg.lr,
        weight_decay: cfg.weight_decay,
        ..AdamConfig::default()
    };
    let mut adam = AdamState::new(adam_cfg, &[&model.w1, &model.b1, &model.w2, &model.b2]);
    let targets: Arc<Vec<(usize, usize)>> = Arc::new(
        train_nodes
            .iter()
            .map(|&v| (v, g.label(v).expect("train nodes are labeled")))
            .collect(),
    );
    let val = g.val_nodes();
    let mut best = model.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut since = 0;
    for _ in 0..cfg.max_epochs {
        let mut tape = Tape::new();
        let (out, vars) = model.forward(&mut tape, g, true)?;
        let acc = split_accuracy(g, tape.value(out), if val.is_empty() { &train_nodes } else { &val });
        if acc > best_acc {
            best_acc = acc;
            best = model.clone();
            since = 0;
        } else {
            since += 1;
            if since >= cfg.patience {
                break;
            }
        }
        let loss = tape.softmax_cross_entropy(out, targets.clone())?;
        let mut grads = tape.backward(loss)?;
        for (p, v) in model.params_mut().into_iter().zip(vars) {
            p.grad = Some(grads.take(v));
        }
        adam.step(&mut model.params_mut())?;
    }
    Ok(best)
}

/// Test accuracy of KNN retrieval over a baseline's output embeddings.
pub fn baseline_accuracy(g: &Graph, model: &BaselineModel, k: usize, tau: f64) -> Result<f64> {
    let emb = model.embeddings(g)?;
    let index = SubgraphIndex::build(g, 1, 1)?;
    let scorer = Scorer::node_only(g, &index, &emb)?;
    let test = g.test_nodes();
    let preds = crate::explain::classify(&scorer, &test, &g.train_nodes(), k, tau, g.num_classes())?;
    let predicted: Vec<usize> = preds.iter().map(|p| p.predicted_class).collect();
    let truth: Vec<usize> = test.iter().map(|&v| g.label(v).unwrap_or(usize::MAX)).collect();
    classification_accuracy(&predicted, &truth)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RobustnessRow {
    pub rate: f64,
    pub model: String,
    pub seed: u64,
    pub accuracy: f64,
}

/// For every rate and seed: perturb edges, retrain both models from
/// scratch, record test accuracy.
pub fn robustness_sweep(
    g: &Graph,
    cfg: &TrainConfig,
    baseline: &BaselineConfig,
    rates: &[f64],
    seeds: &[u64],
) -> Result<Vec<RobustnessRow>> {
    let mut rows = Vec::new();
    for &rate in rates {
        for &seed in seeds {
            let noisy = augment(g, Augmentation::EdgePerturb(rate), seed)?;
            let run_cfg = TrainConfig { seed, ..cfg.clone() };
            let trained = train(&noisy, &run_cfg)?;
            let ours = evaluate_model(&noisy, &trained.params, &run_cfg, None, &[Metric::Accuracy])?;
            let base_cfg = BaselineConfig {
                seed,
                ..baseline.clone()
            };
            let model = train_baseline(&noisy, BaselineVariant::GcnK, &base_cfg)?;
            let theirs = baseline_accuracy(&noisy, &model, cfg.k, cfg.tau)?;
            info!(
                "rate {rate} seed {seed}: se-gnn {:.4}, gcn_k {:.4}",
                ours.accuracy, theirs
            );
            rows.push(RobustnessRow {
                rate,
                model: "se_gnn".into(),
                seed,
                accuracy: ours.accuracy,
            });
            rows.push(RobustnessRow {
                rate,
                model: BaselineVariant::GcnK.name().into(),
                seed,
                accuracy: theirs,
            });
        }
    }
    Ok(rows)
}

pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut out = String::from("rate,model,seed,accuracy\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{}", r.rate, r.model, r.seed, r.accuracy);
    }
    out
}
