//! The training objective and loop: a negative-sampled classification loss
//! over approximate nearest labeled nodes, plus node- and edge-level InfoNCE
//! losses between two augmented views.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::sync::Arc;
use std::time::Instant;

use log::{debug, info};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::augment::{augment_with_rng, Augmentation};
use crate::autodiff::{PairDotSpec, Segments, Tape, Var};
use crate::encoder::{encode_on_tape, EncoderParams, EncoderVars};
use crate::error::{contract, Error, Result};
use crate::explain::{classify, rank_order};
use crate::graph::{normalize_adjacency, Graph, SubgraphIndex};
use crate::optim::{AdamConfig, AdamState};
use crate::similarity::{PairScore, Scorer};

/// Every hyperparameter of the objective and the optimizer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub k: usize,
    /// Same-label support set size; 0 means `2 * k`.
    pub n_support: usize,
    pub q_neg: usize,
    pub q_n: usize,
    pub q_e: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub tau: f64,
    pub mask_rate: f64,
    pub perturb_rate: f64,
    pub hop: usize,
    pub hidden: usize,
    pub lr: f64,
    pub weight_decay: f64,
    pub max_epochs: usize,
    pub patience: usize,
    pub batch_nodes: usize,
    pub batch_edges: usize,
    /// Per-subgraph edge cap; 0 keeps every edge.
    pub max_subgraph_edges: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            k: 25,
            n_support: 0,
            q_neg: 20,
            q_n: 100,
            q_e: 100,
            alpha: 0.01,
            beta: 0.01,
            lambda: 0.5,
            tau: 1.0,
            mask_rate: 0.2,
            perturb_rate: 0.1,
            hop: 2,
            hidden: 64,
            lr: 1e-3,
            weight_decay: 5e-4,
            max_epochs: 300,
            patience: 30,
            batch_nodes: 256,
            batch_edges: 256,
            max_subgraph_edges: 0,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn support_size(&self) -> usize {
        if self.n_support == 0 {
            2 * self.k
        } else {
            self.n_support
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.support_size() < self.k {
            return bad(format!(
                "n_support {} must not be below k {}",
                self.support_size(),
                self.k
            ));
        }
        for (name, v) in [
            ("lambda", self.lambda),
            ("mask_rate", self.mask_rate),
            ("perturb_rate", self.perturb_rate),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return bad(format!("{name} = {v} outside [0, 1]"));
            }
        }
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad(format!("tau = {} must be positive", self.tau));
        }
        for (name, v) in [
            ("alpha", self.alpha),
            ("beta", self.beta),
            ("lr", self.lr),
            ("weight_decay", self.weight_decay),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} = {v} must be finite and non-negative"));
            }
        }
        if self.hop == 0 || self.hidden == 0 || self.max_epochs == 0 {
            return bad("hop, hidden and max_epochs must be at least 1".into());
        }
        Ok(())
    }

    pub fn adam(&self) -> AdamConfig {
        AdamConfig {
            lr: self.lr,
            weight_decay: self.weight_decay,
            ..AdamConfig::default()
        }
    }
}

/// Labeled nodes grouped by class.
#[derive(Clone, Debug)]
pub struct ClassIndex {
    pub by_class: BTreeMap<usize, Vec<usize>>,
}

impl ClassIndex {
    pub fn new(g: &Graph, labeled: &[usize]) -> Result<Self> {
        let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for &v in labeled {
            match g.label(v) {
                Some(c) => by_class.entry(c).or_default().push(v),
                None => return contract(format!("labeled node {v} has no label")),
            }
        }
        for ids in by_class.values_mut() {
            ids.sort_unstable();
            ids.dedup();
        }
        Ok(ClassIndex { by_class })
    }

    fn same_and_other(&self, anchor: usize, label: usize) -> (Vec<usize>, Vec<usize>) {
        let mut same = Vec::new();
        let mut other = Vec::new();
        for (&c, ids) in &self.by_class {
            if c == label {
                same.extend(ids.iter().copied().filter(|&v| v != anchor));
            } else {
                other.extend_from_slice(ids);
            }
        }
        (same, other)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct SampledBatch {
    pub anchor: usize,
    /// Approximate nearest same-label nodes, best first.
    pub positives: Vec<usize>,
    pub negatives: Vec<usize>,
}

/// A batch with the scores (and edge matchings) of its members: positives
/// first, then negatives.
#[derive(Clone, Debug)]
pub struct ScoredBatch {
    pub batch: SampledBatch,
    pub scores: Vec<PairScore>,
}

fn choose<R: Rng>(pool: &[usize], n: usize, rng: &mut R) -> Vec<usize> {
    if n >= pool.len() {
        return pool.to_vec();
    }
    sample(rng, pool.len(), n).into_iter().map(|i| pool[i]).collect()
}

/// Support and negative ids for one anchor, before any scoring.
pub fn draw_candidates<R: Rng>(
    g: &Graph,
    classes: &ClassIndex,
    anchor: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<(Vec<usize>, Vec<usize>)> {
    let label = match g.label(anchor) {
        Some(l) => l,
        None => return contract(format!("anchor {anchor} has no label")),
    };
    let (same, other) = classes.same_and_other(anchor, label);
    if same.is_empty() {
        return contract(format!("anchor {anchor} has no other node of class {label}"));
    }
    if other.is_empty() {
        return contract("all labeled nodes share one class; no negatives exist");
    }
    let support = choose(&same, cfg.support_size(), rng);
    let negatives = choose(&other, cfg.q_neg, rng);
    Ok((support, negatives))
}

/// Scores the support set and keeps its top `k` as positives.
pub fn select_positives(
    scorer: &Scorer,
    anchor: usize,
    support: &[usize],
    negatives: &[usize],
    k: usize,
) -> ScoredBatch {
    let mut sup = scorer.score_against(anchor, support);
    sup.sort_by(|a, b| rank_order((a.score.overall, a.candidate), (b.score.overall, b.candidate)));
    sup.truncate(k);
    let neg = scorer.score_against(anchor, negatives);
    let batch = SampledBatch {
        anchor,
        positives: sup.iter().map(|p| p.candidate).collect(),
        negatives: negatives.to_vec(),
    };
    sup.extend(neg);
    ScoredBatch { batch, scores: sup }
}

pub fn sample_training_batch<R: Rng>(
    scorer: &Scorer,
    classes: &ClassIndex,
    anchor: usize,
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ScoredBatch> {
    let (support, negatives) = draw_candidates(scorer.graph(), classes, anchor, cfg, rng)?;
    Ok(select_positives(scorer, anchor, &support, &negatives, cfg.k))
}

/// `(h_u + h_v) / 2` for every listed edge, recorded on the tape.
pub fn edge_embeddings_on_tape(tape: &mut Tape, h: Var, edges: &[(usize, usize)]) -> Result<Var> {
    let us = Arc::new(edges.iter().map(|e| e.0).collect::<Vec<_>>());
    let vs = Arc::new(edges.iter().map(|e| e.1).collect::<Vec<_>>());
    let a = tape.gather_rows(h, us)?;
    let b = tape.gather_rows(h, vs)?;
    let s = tape.add(a, b)?;
    tape.scalar_mul(s, 0.5)
}

/// Differentiable overall similarity for every (anchor, member) pair of
/// the batches, in batch order. The edge matchings are taken from the
/// batches' scores and held fixed; only the matched similarities carry
/// gradient.
pub fn pair_similarities(
    tape: &mut Tape,
    h: Var,
    g: &Graph,
    index: &SubgraphIndex,
    batches: &[ScoredBatch],
    lambda: f64,
) -> Result<Var> {
    let mut node_spec = PairDotSpec::default();
    let mut edge_spec = PairDotSpec::default();
    let mut p = 0;
    for b in batches {
        let t = b.batch.anchor;
        let t_edges = &index.get(t).edge_ids;
        for s in &b.scores {
            node_spec.push(t, s.candidate, lambda, p);
            if !s.matched.is_empty() {
                let w = (1.0 - lambda) / t_edges.len() as f64;
                for (&te, &ce) in t_edges.iter().zip(&s.matched) {
                    edge_spec.push(te, ce, w, p);
                }
            }
            p += 1;
        }
    }
    node_spec.out_len = p;
    edge_spec.out_len = p;
    let hn = tape.row_l2_normalize(h)?;
    let node_part = tape.pair_dot(hn, hn, Arc::new(node_spec))?;
    if edge_spec.is_empty() {
        return Ok(node_part);
    }
    let e = edge_embeddings_on_tape(tape, h, g.edges())?;
    let en = tape.row_l2_normalize(e)?;
    let edge_part = tape.pair_dot(en, en, Arc::new(edge_spec))?;
    tape.add(node_part, edge_part)
}

/// Mean over anchors of `LSE(all / tau) - LSE(positives / tau)`.
pub fn classification_loss(
    tape: &mut Tape,
    h: Var,
    g: &Graph,
    index: &SubgraphIndex,
    batches: &[ScoredBatch],
    cfg: &TrainConfig,
) -> Result<Var> {
    if batches.is_empty() {
        return contract("classification loss over zero anchors");
    }
    let mut all_group = Vec::new();
    let mut pos_rows = Vec::new();
    let mut pos_group = Vec::new();
    let mut p = 0;
    for (i, b) in batches.iter().enumerate() {
        if b.batch.positives.is_empty() {
            return contract(format!("anchor {} has no positives", b.batch.anchor));
        }
        for j in 0..b.scores.len() {
            all_group.push(i as u32);
            if j < b.batch.positives.len() {
                pos_rows.push(p);
                pos_group.push(i as u32);
            }
            p += 1;
        }
    }
    let s = pair_similarities(tape, h, g, index, batches, cfg.lambda)?;
    let logits = tape.scalar_mul(s, 1.0 / cfg.tau)?;
    let n = batches.len();
    let lse_all = tape.segment_logsumexp(
        logits,
        Arc::new(Segments {
            group: all_group,
            n_groups: n,
        }),
    )?;
    let pos = tape.gather_rows(logits, Arc::new(pos_rows))?;
    let lse_pos = tape.segment_logsumexp(
        pos,
        Arc::new(Segments {
            group: pos_group,
            n_groups: n,
        }),
    )?;
    let per_anchor = tape.sub(lse_all, lse_pos)?;
    tape.mean(per_anchor)
}

/// Query ids and their dictionary negatives for one contrastive level.
#[derive(Clone, Debug, PartialEq)]
pub struct ContrastiveSample {
    pub queries: Vec<usize>,
    pub negatives: Vec<Vec<usize>>,
}

pub fn sample_contrastive<R: Rng>(
    population: usize,
    batch: usize,
    q: usize,
    rng: &mut R,
) -> Result<ContrastiveSample> {
    if batch > population {
        return contract(format!("batch {batch} exceeds population {population}"));
    }
    if batch > 0 && q >= population {
        return contract(format!(
            "dictionary of {q} negatives needs more than {population} items"
        ));
    }
    let queries = sample(rng, population, batch).into_vec();
    let negatives = queries
        .iter()
        .map(|&i| {
            sample(rng, population - 1, q)
                .into_iter()
                .map(|j| if j >= i { j + 1 } else { j })
                .collect()
        })
        .collect();
    Ok(ContrastiveSample { queries, negatives })
}

/// InfoNCE between rows of `za` (queries) and `zb` (dictionary); the
/// positive of query `i` is row `i` of `zb`. Inputs should be unit rows.
pub fn contrastive_loss(
    tape: &mut Tape,
    za: Var,
    zb: Var,
    s: &ContrastiveSample,
    tau: f64,
) -> Result<Var> {
    if s.queries.is_empty() {
        return contract("contrastive loss over an empty batch");
    }
    let rows = tape.value(za).rows();
    let mut spec = PairDotSpec::default();
    let mut group = Vec::new();
    let mut pos_rows = Vec::new();
    let mut p = 0;
    for (i, (&q, negs)) in s.queries.iter().zip(&s.negatives).enumerate() {
        if q >= rows || negs.iter().any(|&n| n >= rows) {
            return contract(format!("contrastive id out of {rows} rows"));
        }
        pos_rows.push(p);
        for &c in std::iter::once(&q).chain(negs) {
            spec.push(q, c, 1.0, p);
            group.push(i as u32);
            p += 1;
        }
    }
    spec.out_len = p;
    let sims = tape.pair_dot(za, zb, Arc::new(spec))?;
    let logits = tape.scalar_mul(sims, 1.0 / tau)?;
    let lse = tape.segment_logsumexp(
        logits,
        Arc::new(Segments {
            group,
            n_groups: s.queries.len(),
        }),
    )?;
    let pos = tape.gather_rows(logits, Arc::new(pos_rows))?;
    let diff = tape.sub(lse, pos)?;
    tape.mean(diff)
}

/// Both augmentations in sequence: attribute masking, then edge perturbation.
pub fn augmented_view<R: Rng>(g: &Graph, cfg: &TrainConfig, rng: &mut R) -> Result<Graph> {
    let masked = augment_with_rng(g, Augmentation::AttributeMask(cfg.mask_rate), rng)?;
    augment_with_rng(&masked, Augmentation::EdgePerturb(cfg.perturb_rate), rng)
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub l_c: f64,
    pub l_n: f64,
    pub l_e: f64,
    pub total: f64,
    pub val_acc: f64,
    pub seconds: f64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct TrainingLog {
    pub epochs: Vec<EpochLog>,
    pub best_epoch: usize,
    pub best_val_acc: f64,
}

impl TrainingLog {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,L_c,L_n,L_e,total,val_acc,seconds\n");
        for e in &self.epochs {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{:.3}",
                e.epoch, e.l_c, e.l_n, e.l_e, e.total, e.val_acc, e.seconds
            );
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub params: EncoderParams,
    pub log: TrainingLog,
}

/// Loss terms and gradients of the full objective at `params`.
pub struct ObjectiveEval {
    pub l_c: f64,
    pub l_n: f64,
    pub l_e: f64,
    pub total: f64,
    pub grads: [crate::tensor::Tensor; 5],
}

/// Everything random in one evaluation of the objective, drawn up front.
pub struct ObjectiveDraw {
    pub candidates: Vec<(usize, Vec<usize>, Vec<usize>)>,
    pub views: Option<(Graph, Graph)>,
    pub node_sample: Option<ContrastiveSample>,
    pub edge_sample: Option<ContrastiveSample>,
}

pub fn draw_objective<R: Rng>(
    g: &Graph,
    classes: &ClassIndex,
    anchors: &[usize],
    cfg: &TrainConfig,
    rng: &mut R,
) -> Result<ObjectiveDraw> {
    let mut candidates = Vec::with_capacity(anchors.len());
    for &a in anchors {
        let (s, n) = draw_candidates(g, classes, a, cfg, rng)?;
        candidates.push((a, s, n));
    }
    let use_nodes = cfg.alpha > 0.0 && g.node_count() > 1;
    let use_edges = cfg.beta > 0.0 && g.edge_count() > 1;
    let views = if use_nodes || use_edges {
        Some((augmented_view(g, cfg, rng)?, augmented_view(g, cfg, rng)?))
    } else {
        None
    };
    let node_sample = if use_nodes {
        let n = g.node_count();
        Some(sample_contrastive(n, cfg.batch_nodes.min(n), cfg.q_n.min(n - 1), rng)?)
    } else {
        None
    };
    let edge_sample = if use_edges {
        let e = g.edge_count();
        Some(sample_contrastive(e, cfg.batch_edges.min(e), cfg.q_e.min(e - 1), rng)?)
    } else {
        None
    };
    Ok(ObjectiveDraw {
        candidates,
        views,
        node_sample,
        edge_sample,
    })
}

/// Records the objective on `tape`; returns `(L_c, L_n, L_e, total)` handles.
#[allow(clippy::too_many_arguments)]
pub fn record_objective(
    tape: &mut Tape,
    vars: &EncoderVars,
    h: Var,
    g: &Graph,
    index: &SubgraphIndex,
    batches: &[ScoredBatch],
    draw: &ObjectiveDraw,
    cfg: &TrainConfig,
) -> Result<(Var, Option<Var>, Option<Var>, Var)> {
    let l_c = classification_loss(tape, h, g, index, batches, cfg)?;
    let mut total = l_c;
    let (mut l_n, mut l_e) = (None, None);
    if let Some((va, vb)) = &draw.views {
        let encode_view = |tape: &mut Tape, v: &Graph| -> Result<Var> {
            let x = tape.constant(v.features().clone());
            Ok(encode_on_tape(tape, vars, x, &normalize_adjacency(v))?.0)
        };
        let ha = encode_view(tape, va)?;
        let hb = encode_view(tape, vb)?;
        if let Some(s) = &draw.node_sample {
            let za = tape.row_l2_normalize(ha)?;
            let zb = tape.row_l2_normalize(hb)?;
            let l = contrastive_loss(tape, za, zb, s, cfg.tau)?;
            let w = tape.scalar_mul(l, cfg.alpha)?;
            total = tape.add(total, w)?;
            l_n = Some(l);
        }
        if let Some(s) = &draw.edge_sample {
            let ea = edge_embeddings_on_tape(tape, ha, g.edges())?;
            let eb = edge_embeddings_on_tape(tape, hb, g.edges())?;
            let za = tape.row_l2_normalize(ea)?;
            let zb = tape.row_l2_normalize(eb)?;
            let l = contrastive_loss(tape, za, zb, s, cfg.tau)?;
            let w = tape.scalar_mul(l, cfg.beta)?;
            total = tape.add(total, w)?;
            l_e = Some(l);
        }
    }
    Ok((l_c, l_n, l_e, total))
}

/// Evaluates the full objective at `params` for a fixed draw: scores and
/// matchings come from `params` itself.
pub fn evaluate_objective(
    g: &Graph,
    index: &SubgraphIndex,
    params: &EncoderParams,
    draw: &ObjectiveDraw,
    cfg: &TrainConfig,
) -> Result<ObjectiveEval> {
    Ok(objective_with(g, index, params, draw, cfg, |_| Ok(()))?.0)
}

/// Shared body of an objective evaluation; `inspect` sees the scorer built
/// from the clean-graph embeddings before the losses are recorded.
fn objective_with<T>(
    g: &Graph,
    index: &SubgraphIndex,
    params: &EncoderParams,
    draw: &ObjectiveDraw,
    cfg: &TrainConfig,
    inspect: impl FnOnce(&Scorer) -> Result<T>,
) -> Result<(ObjectiveEval, T)> {
    let adj = normalize_adjacency(g);
    let mut tape = Tape::new();
    let vars = params.register(&mut tape, true);
    let x = tape.constant(g.features().clone());
    let (h, _) = encode_on_tape(&mut tape, &vars, x, &adj)?;
    let scorer = Scorer::new(g, index, tape.value(h), cfg.lambda)?;
    let batches: Vec<ScoredBatch> = draw
        .candidates
        .par_iter()
        .map(|(a, s, n)| select_positives(&scorer, *a, s, n, cfg.k))
        .collect();
    let extra = inspect(&scorer)?;
    let (l_c, l_n, l_e, total) =
        record_objective(&mut tape, &vars, h, g, index, &batches, draw, cfg)?;
    let grads = tape.backward(total)?;
    let value = |v: Option<Var>| v.map_or(0.0, |v| tape.value(v).item());
    let eval = ObjectiveEval {
        l_c: tape.value(l_c).item(),
        l_n: value(l_n),
        l_e: value(l_e),
        total: tape.value(total).item(),
        grads: vars.all().map(|v| grads.wrt(v)),
    };
    Ok((eval, extra))
}

fn diverged(epoch: usize, e: Error) -> Error {
    match e {
        Error::NonFinite { op } => Error::Divergence {
            epoch,
            detail: format!("{op} produced a non-finite value"),
        },
        other => other,
    }
}

/// Runs the optimization loop with early stopping on validation accuracy
/// and returns the best-validation parameters.
pub fn train(g: &Graph, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let anchors = g.train_nodes();
    let val = g.val_nodes();
    if anchors.is_empty() || val.is_empty() {
        return contract("training needs non-empty train and val masks");
    }
    let classes = ClassIndex::new(g, &anchors)?;
    let num_classes = g.num_classes();
    let index = SubgraphIndex::build(g, cfg.hop, cfg.max_subgraph_edges)?;
    let mut params = EncoderParams::init(g.feature_dim(), cfg.hidden, cfg.seed)?;
    let mut adam = AdamState::new(cfg.adam(), &params.params());
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut log = TrainingLog::default();
    let mut best = params.clone();
    let mut best_acc = f64::NEG_INFINITY;
    let mut since_best = 0;

    for epoch in 1..=cfg.max_epochs {
        let start = Instant::now();
        let draw = draw_objective(g, &classes, &anchors, cfg, &mut rng)?;
        let (eval, val_acc) = epoch_step(g, &index, &params, &draw, cfg, &val, &anchors, num_classes)
            .map_err(|e| diverged(epoch, e))?;
        if !eval.total.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("total loss {}", eval.total),
            });
        }
        if val_acc > best_acc {
            best_acc = val_acc;
            best = params.clone();
            log.best_epoch = epoch;
            since_best = 0;
        } else {
            since_best += 1;
        }
        for (p, g) in params.params_mut().into_iter().zip(eval.grads) {
            p.grad = Some(g);
        }
        adam.step(&mut params.params_mut())?;
        let entry = EpochLog {
            epoch,
            l_c: eval.l_c,
            l_n: eval.l_n,
            l_e: eval.l_e,
            total: eval.total,
            val_acc,
            seconds: start.elapsed().as_secs_f64(),
        };
        debug!(
            "epoch {epoch}: L_c {:.4} L_n {:.4} L_e {:.4} val {:.4} ({:.2}s)",
            entry.l_c, entry.l_n, entry.l_e, entry.val_acc, entry.seconds
        );
        log.epochs.push(entry);
        if since_best >= cfg.patience {
            info!("early stop at epoch {epoch}; best epoch {}", log.best_epoch);
            break;
        }
    }
    log.best_val_acc = best_acc;
    Ok(TrainOutcome { params: best, log })
}

/// Objective and gradients at `params`, plus the validation accuracy of
/// the same parameters.
#[allow(clippy::too_many_arguments)]
fn epoch_step(
    g: &Graph,
    index: &SubgraphIndex,
    params: &EncoderParams,
    draw: &ObjectiveDraw,
    cfg: &TrainConfig,
    val: &[usize],
    labeled: &[usize],
    num_classes: usize,
) -> Result<(ObjectiveEval, f64)> {
    objective_with(g, index, params, draw, cfg, |scorer| {
        let preds = classify(scorer, val, labeled, cfg.k, cfg.tau, num_classes)?;
        let correct = val
            .iter()
            .zip(&preds)
            .filter(|(&v, p)| g.label(v) == Some(p.predicted_class))
            .count();
        Ok(correct as f64 / val.len() as f64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn scalar_tape(values: &[f64]) -> (Tape, Var) {
        let mut tape = Tape::new();
        let v = tape.param(crate::tensor::Tensor::from_vec(values.len(), 1, values.to_vec()).unwrap());
        (tape, v)
    }

    #[test]
    fn config_defaults_validate() {
        let c = TrainConfig::default();
        c.validate().unwrap();
        assert_eq!(c.support_size(), 50);
        let bad = TrainConfig { tau: 0.0, ..c.clone() };
        assert!(bad.validate().is_err());
        let bad = TrainConfig { n_support: 3, k: 5, ..c };
        assert!(bad.validate().is_err());
    }

    #[test]
    fn contrastive_with_empty_dictionary_is_zero() {
        let (mut tape, z) = scalar_tape(&[0.3, -0.2, 0.9]);
        let s = ContrastiveSample {
            queries: vec![0, 2],
            negatives: vec![vec![], vec![]],
        };
        let l = contrastive_loss(&mut tape, z, z, &s, 1.0).unwrap();
        assert_eq!(tape.value(l).item(), 0.0);
    }

    #[test]
    fn contrastive_equal_negative_gives_ln2() {
        let mut tape = Tape::new();
        let z = tape.param(crate::tensor::Tensor::from_rows(&[vec![1.0, 0.0], vec![1.0, 0.0]]).unwrap());
        let s = ContrastiveSample {
            queries: vec![0],
            negatives: vec![vec![1]],
        };
        let l = contrastive_loss(&mut tape, z, z, &s, 1.0).unwrap();
        assert!((tape.value(l).item() - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn contrastive_sample_shapes() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let s = sample_contrastive(10, 4, 9, &mut rng).unwrap();
        for (q, negs) in s.queries.iter().zip(&s.negatives) {
            assert_eq!(negs.len(), 9);
            assert!(!negs.contains(q));
        }
        assert!(sample_contrastive(3, 4, 1, &mut rng).is_err());
        assert!(sample_contrastive(3, 2, 3, &mut rng).is_err());
    }

    #[test]
    fn log_csv_header() {
        let log = TrainingLog::default();
        assert_eq!(log.to_csv(), "epoch,L_c,L_n,L_e,total,val_acc,seconds\n");
    }
}
