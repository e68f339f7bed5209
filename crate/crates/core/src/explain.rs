//! K-nearest labeled retrieval, softmax-weighted prediction, and the
//! explanation record built from the retrieved neighbors' edge matchings.

use std::cmp::Ordering;
use std::fmt::Write as _;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::similarity::{EdgeMatching, Scorer, SimilarityScore};

#[derive(Clone, Debug, PartialEq)]
pub struct Neighbor {
    pub id: usize,
    pub label: usize,
    pub score: SimilarityScore,
    pub matching: EdgeMatching,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeighborSet {
    pub target: usize,
    /// Sorted by overall score descending, then id ascending.
    pub neighbors: Vec<Neighbor>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Prediction {
    pub distribution: Vec<f64>,
    pub predicted_class: usize,
    pub weights: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Explanation {
    pub target: usize,
    pub prediction: Prediction,
    pub neighbors: NeighborSet,
    /// Target subgraph edges with their importance, in sorted edge order.
    pub edge_importances: Vec<((usize, usize), f64)>,
    pub crucial_edges: Vec<(usize, usize)>,
}

/// Descending by score, ascending by id.
pub fn rank_order(a: (f64, usize), b: (f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.cmp(&b.1))
}

/// Exact top-`k` labeled nodes by overall similarity. The target itself is
/// never its own neighbor.
pub fn k_nearest_labeled(
    scorer: &Scorer,
    target: usize,
    labeled: &[usize],
    k: usize,
) -> Result<NeighborSet> {
    if k == 0 {
        return contract("K must be at least 1");
    }
    let g = scorer.graph();
    let candidates: Vec<usize> = labeled.iter().copied().filter(|&v| v != target).collect();
    if candidates.is_empty() {
        return contract(format!("no labeled candidates for target {target}"));
    }
    for &c in &candidates {
        if g.label(c).is_none() {
            return contract(format!("candidate {c} has no label"));
        }
    }
    let mut scored = scorer.score_against(target, &candidates);
    scored.sort_by(|a, b| {
        rank_order((a.score.overall, a.candidate), (b.score.overall, b.candidate))
    });
    scored.truncate(k);
    let neighbors = scored
        .iter()
        .map(|p| Neighbor {
            id: p.candidate,
            label: g.label(p.candidate).expect("checked"),
            score: p.score,
            matching: scorer.matching(target, p),
        })
        .collect();
    Ok(NeighborSet { target, neighbors })
}

/// Softmax of `scores / tau`.
pub fn softmax_weights(scores: &[f64], tau: f64) -> Vec<f64> {
    let max = scores.iter().fold(f64::NEG_INFINITY, |m, &s| m.max(s / tau));
    let exps: Vec<f64> = scores.iter().map(|&s| (s / tau - max).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / z).collect()
}

/// Weighted vote; the lowest class id wins ties.
pub fn argmax(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }
    best
}

pub fn predict(ns: &NeighborSet, num_classes: usize, tau: f64) -> Result<Prediction> {
    if tau <= 0.0 || !tau.is_finite() {
        return contract(format!("temperature {tau} must be positive"));
    }
    if ns.neighbors.is_empty() {
        return contract("prediction needs at least one neighbor");
    }
    let scores: Vec<f64> = ns.neighbors.iter().map(|n| n.score.overall).collect();
    let weights = softmax_weights(&scores, tau);
    let mut distribution = vec![0.0; num_classes];
    for (n, w) in ns.neighbors.iter().zip(&weights) {
        if n.label >= num_classes {
            return contract(format!("label {} outside {num_classes} classes", n.label));
        }
        distribution[n.label] += w;
    }
    Ok(Prediction {
        predicted_class: argmax(&distribution),
        distribution,
        weights,
    })
}

/// Mean matched similarity per target edge over all neighbors; a neighbor
/// without a matching contributes 0.
pub fn edge_importance(target_edge_count: usize, matchings: &[&EdgeMatching]) -> Result<Vec<f64>> {
    let mut out = vec![0.0; target_edge_count];
    if matchings.is_empty() {
        return Ok(out);
    }
    for m in matchings {
        if m.pairs.is_empty() {
            continue;
        }
        if m.pairs.len() != target_edge_count {
            return contract(format!(
                "matching against {} covers {} of {target_edge_count} edges",
                m.candidate,
                m.pairs.len()
            ));
        }
        for (o, p) in out.iter_mut().zip(&m.pairs) {
            *o += p.similarity;
        }
    }
    let k = matchings.len() as f64;
    out.iter_mut().for_each(|v| *v /= k);
    Ok(out)
}

/// Edges whose importance reaches `threshold`, in input order.
pub fn crucial_subgraph(
    edges: &[(usize, usize)],
    importances: &[f64],
    threshold: f64,
) -> Vec<(usize, usize)> {
    edges
        .iter()
        .zip(importances)
        .filter(|(_, &p)| p >= threshold)
        .map(|(&e, _)| e)
        .collect()
}

/// `0.8 * max` for a positive maximum, otherwise the maximum itself.
pub fn default_threshold(importances: &[f64]) -> f64 {
    let max = importances.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max > 0.0 {
        0.8 * max
    } else {
        max
    }
}

pub fn explain(
    scorer: &Scorer,
    target: usize,
    labeled: &[usize],
    k: usize,
    tau: f64,
    num_classes: usize,
) -> Result<Explanation> {
    let neighbors = k_nearest_labeled(scorer, target, labeled, k)?;
    let prediction = predict(&neighbors, num_classes, tau)?;
    let edges = &scorer.index().get(target).edges;
    let matchings: Vec<&EdgeMatching> = neighbors.neighbors.iter().map(|n| &n.matching).collect();
    let importances = edge_importance(edges.len(), &matchings)?;
    let crucial_edges = crucial_subgraph(edges, &importances, default_threshold(&importances));
    Ok(Explanation {
        target,
        prediction,
        neighbors,
        edge_importances: edges.iter().copied().zip(importances).collect(),
        crucial_edges,
    })
}

/// Explanations for many targets, in input order.
pub fn explain_all(
    scorer: &Scorer,
    targets: &[usize],
    labeled: &[usize],
    k: usize,
    tau: f64,
    num_classes: usize,
) -> Result<Vec<Explanation>> {
    targets
        .par_iter()
        .map(|&t| explain(scorer, t, labeled, k, tau, num_classes))
        .collect()
}

/// Predictions only, in input order.
pub fn classify(
    scorer: &Scorer,
    targets: &[usize],
    labeled: &[usize],
    k: usize,
    tau: f64,
    num_classes: usize,
) -> Result<Vec<Prediction>> {
    targets
        .par_iter()
        .map(|&t| predict(&k_nearest_labeled(scorer, t, labeled, k)?, num_classes, tau))
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborRecord {
    pub id: usize,
    pub label: usize,
    pub s: f64,
    pub s_n: f64,
    pub s_e: f64,
    pub weight: f64,
    pub matching: Vec<(usize, usize, usize, usize, f64)>,
}

/// Serialized form of an [`Explanation`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExplanationRecord {
    pub target: usize,
    pub predicted_class: usize,
    pub distribution: Vec<f64>,
    pub neighbors: Vec<NeighborRecord>,
    pub edge_importance: Vec<(usize, usize, f64)>,
}

impl From<&Explanation> for ExplanationRecord {
    fn from(e: &Explanation) -> Self {
        ExplanationRecord {
            target: e.target,
            predicted_class: e.prediction.predicted_class,
            distribution: e.prediction.distribution.clone(),
            neighbors: e
                .neighbors
                .neighbors
                .iter()
                .zip(&e.prediction.weights)
                .map(|(n, &w)| NeighborRecord {
                    id: n.id,
                    label: n.label,
                    s: n.score.overall,
                    s_n: n.score.node_sim,
                    s_e: n.score.struct_sim,
                    weight: w,
                    matching: n
                        .matching
                        .pairs
                        .iter()
                        .map(|p| {
                            (
                                p.target_edge.0,
                                p.target_edge.1,
                                p.candidate_edge.0,
                                p.candidate_edge.1,
                                p.similarity,
                            )
                        })
                        .collect(),
                })
                .collect(),
            edge_importance: e
                .edge_importances
                .iter()
                .map(|&((u, v), p)| (u, v, p))
                .collect(),
        }
    }
}

/// Graphviz rendering: the target subgraph and each neighbor subgraph as
/// clusters. Target edge `i` is labelled `i+1`; a candidate edge carries
/// the labels of every target edge matched to it. Crucial target edges are
/// drawn bold.
pub fn to_dot(e: &Explanation, scorer: &Scorer) -> String {
    let index = scorer.index();
    let mut out = String::new();
    let _ = writeln!(out, "graph explanation_{} {{", e.target);
    let _ = writeln!(out, "  node [shape=circle];");
    let target_sub = index.get(e.target);
    let _ = writeln!(out, "  subgraph cluster_target {{");
    let _ = writeln!(
        out,
        "    label=\"target {} (predicted {})\";",
        e.target, e.prediction.predicted_class
    );
    for &v in &target_sub.nodes {
        let style = if v == e.target { ", style=filled" } else { "" };
        let _ = writeln!(out, "    t_{v} [label=\"{v}\"{style}];");
    }
    for (i, &((u, v), p)) in e.edge_importances.iter().enumerate() {
        let bold = if e.crucial_edges.contains(&(u, v)) {
            ", style=bold"
        } else {
            ""
        };
        let _ = writeln!(
            out,
            "    t_{u} -- t_{v} [label=\"{}\", tooltip=\"{p:.4}\"{bold}];",
            i + 1
        );
    }
    let _ = writeln!(out, "  }}");
    for (j, n) in e.neighbors.neighbors.iter().enumerate() {
        let sub = index.get(n.id);
        let _ = writeln!(out, "  subgraph cluster_n{j} {{");
        let _ = writeln!(
            out,
            "    label=\"neighbor {} (label {}, s={:.4})\";",
            n.id, n.label, n.score.overall
        );
        for &v in &sub.nodes {
            let style = if v == n.id { ", style=filled" } else { "" };
            let _ = writeln!(out, "    n{j}_{v} [label=\"{v}\"{style}];");
        }
        for &(u, v) in &sub.edges {
            let tags: Vec<String> = n
                .matching
                .pairs
                .iter()
                .enumerate()
                .filter(|(_, p)| p.candidate_edge == (u, v))
                .map(|(i, _)| (i + 1).to_string())
                .collect();
            if tags.is_empty() {
                let _ = writeln!(out, "    n{j}_{u} -- n{j}_{v};");
            } else {
                let _ = writeln!(out, "    n{j}_{u} -- n{j}_{v} [label=\"{}\"];", tags.join(","));
            }
        }
        let _ = writeln!(out, "  }}");
    }
    out.push_str("}\n");
    out
}
