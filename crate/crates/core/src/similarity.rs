//! Node similarity, cross-subgraph edge matching and the fused score.
//!
//! Two paths compute the same quantities. The reference functions take
//! explicit embeddings and use [`cosine`]. [`Scorer`] works on unit-norm
//! rows for a whole graph and batches the edge products through GEMM; it is
//! what retrieval and training use.

use crate::encoder::{edge_matrix, embed_edges, EdgeEmbedding, NodeEmbeddings};
use crate::error::{contract, Result};
use crate::graph::{khop_subgraph, Graph, SubgraphIndex};
use crate::tensor::{cosine, dot, gemm, Tensor};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MatchedPair {
    pub target_edge: (usize, usize),
    pub candidate_edge: (usize, usize),
    pub similarity: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct EdgeMatching {
    pub target: usize,
    pub candidate: usize,
    pub pairs: Vec<MatchedPair>,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SimilarityScore {
    pub node_sim: f64,
    pub struct_sim: f64,
    pub overall: f64,
    pub lambda: f64,
}

impl SimilarityScore {
    pub fn fuse(node_sim: f64, struct_sim: f64, lambda: f64) -> Self {
        SimilarityScore {
            node_sim,
            struct_sim,
            overall: lambda * node_sim + (1.0 - lambda) * struct_sim,
            lambda,
        }
    }
}

pub fn node_similarity(h_t: &[f64], h_l: &[f64]) -> f64 {
    cosine(h_t, h_l)
}

/// Per target edge, the most similar candidate edge (earliest on ties).
/// `None` when the candidate side has no edges.
pub fn match_edges(
    target_edges: &[EdgeEmbedding],
    candidate_edges: &[EdgeEmbedding],
) -> Option<Vec<MatchedPair>> {
    if candidate_edges.is_empty() {
        return None;
    }
    Some(
        target_edges
            .iter()
            .map(|t| {
                let mut best = 0;
                let mut best_sim = f64::NEG_INFINITY;
                for (j, c) in candidate_edges.iter().enumerate() {
                    let s = cosine(&t.vector, &c.vector);
                    if s > best_sim {
                        best = j;
                        best_sim = s;
                    }
                }
                MatchedPair {
                    target_edge: t.edge,
                    candidate_edge: candidate_edges[best].edge,
                    similarity: best_sim,
                }
            })
            .collect(),
    )
}

/// Mean pair similarity over the target's edges; 0 without pairs.
pub fn structure_similarity(m: &EdgeMatching) -> f64 {
    if m.pairs.is_empty() {
        return 0.0;
    }
    m.pairs.iter().map(|p| p.similarity).sum::<f64>() / m.pairs.len() as f64
}

/// Reference composition of subgraph extraction, embedding, matching and
/// fusion for one pair of nodes.
pub fn overall_similarity(
    g: &Graph,
    h: &NodeEmbeddings,
    v_t: usize,
    v_l: usize,
    lambda: f64,
    hop: usize,
) -> Result<(SimilarityScore, EdgeMatching)> {
    if !(0.0..=1.0).contains(&lambda) {
        return contract(format!("lambda {lambda} outside [0, 1]"));
    }
    let st = khop_subgraph(g, v_t, hop)?;
    let sl = khop_subgraph(g, v_l, hop)?;
    let node_sim = node_similarity(h.h.row(v_t), h.h.row(v_l));
    let pairs = match (st.edges.is_empty(), sl.edges.is_empty()) {
        (false, false) => match_edges(&embed_edges(&st, h), &embed_edges(&sl, h)).unwrap_or_default(),
        _ => Vec::new(),
    };
    let matching = EdgeMatching {
        target: v_t,
        candidate: v_l,
        pairs,
    };
    let score = SimilarityScore::fuse(node_sim, structure_similarity(&matching), lambda);
    Ok((score, matching))
}

/// Score of one candidate from [`Scorer::score_against`].
#[derive(Clone, Debug, PartialEq)]
pub struct PairScore {
    pub candidate: usize,
    pub score: SimilarityScore,
    /// Graph edge id matched to each target subgraph edge, in subgraph order.
    pub matched: Vec<usize>,
    pub sims: Vec<f64>,
}

/// Batched similarity over all nodes of one graph with fixed embeddings.
#[derive(Clone, Debug)]
pub struct Scorer<'a> {
    graph: &'a Graph,
    index: &'a SubgraphIndex,
    node_unit: Tensor,
    edge_unit: Tensor,
    lambda: f64,
    structure: bool,
}

impl<'a> Scorer<'a> {
    pub fn new(g: &'a Graph, index: &'a SubgraphIndex, h: &Tensor, lambda: f64) -> Result<Self> {
        if h.rows() != g.node_count() || index.len() != g.node_count() {
            return contract(format!(
                "scorer inputs disagree: {} nodes, {} embeddings, {} subgraphs",
                g.node_count(),
                h.rows(),
                index.len()
            ));
        }
        if !(0.0..=1.0).contains(&lambda) {
            return contract(format!("lambda {lambda} outside [0, 1]"));
        }
        Ok(Scorer {
            graph: g,
            index,
            node_unit: h.row_normalized(),
            edge_unit: edge_matrix(h, g.edges()).row_normalized(),
            lambda,
            structure: true,
        })
    }

    /// Cosine of node embeddings only (`lambda = 1`, no edge matching).
    pub fn node_only(g: &'a Graph, index: &'a SubgraphIndex, h: &Tensor) -> Result<Self> {
        if h.rows() != g.node_count() || index.len() != g.node_count() {
            return contract("scorer inputs disagree in node count");
        }
        Ok(Scorer {
            graph: g,
            index,
            node_unit: h.row_normalized(),
            edge_unit: Tensor::zeros(0, h.cols()),
            lambda: 1.0,
            structure: false,
        })
    }

    pub fn graph(&self) -> &'a Graph {
        self.graph
    }

    pub fn index(&self) -> &'a SubgraphIndex {
        self.index
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn node_sim(&self, a: usize, b: usize) -> f64 {
        dot(self.node_unit.row(a), self.node_unit.row(b)).clamp(-1.0, 1.0)
    }

    pub fn score(&self, target: usize, candidate: usize) -> PairScore {
        self.score_against(target, &[candidate])
            .pop()
            .expect("one candidate")
    }

    /// Scores `target` against each candidate, preserving candidate order.
    pub fn score_against(&self, target: usize, candidates: &[usize]) -> Vec<PairScore> {
        if !self.structure {
            return candidates
                .iter()
                .map(|&c| PairScore {
                    candidate: c,
                    score: SimilarityScore::fuse(self.node_sim(target, c), 0.0, 1.0),
                    matched: Vec::new(),
                    sims: Vec::new(),
                })
                .collect();
        }
        let t_edges = &self.index.get(target).edge_ids;
        let m = t_edges.len();
        let sizes: Vec<usize> = candidates
            .iter()
            .map(|&c| self.index.get(c).edge_ids.len())
            .collect();
        let total: usize = sizes.iter().sum();
        let e = self.graph.edge_count();

        // Similarities of every target edge against the candidate edges,
        // either against all graph edges (dense) or a gathered block.
        let (sims, dense) = if m == 0 || total == 0 {
            (Tensor::zeros(0, 0), false)
        } else {
            let t = self.edge_unit.gather_rows(t_edges);
            if total >= e {
                let mut s = Tensor::zeros(m, e);
                gemm(&t, false, &self.edge_unit, true, &mut s, 0.0);
                (s, true)
            } else {
                let ids: Vec<usize> = candidates
                    .iter()
                    .flat_map(|&c| self.index.get(c).edge_ids.iter().copied())
                    .collect();
                let block = self.edge_unit.gather_rows(&ids);
                let mut s = Tensor::zeros(m, total);
                gemm(&t, false, &block, true, &mut s, 0.0);
                (s, false)
            }
        };

        let mut offset = 0;
        candidates
            .iter()
            .zip(&sizes)
            .map(|(&c, &size)| {
                let c_edges = &self.index.get(c).edge_ids;
                let mut matched = Vec::new();
                let mut pair_sims = Vec::new();
                if m > 0 && size > 0 {
                    matched.reserve(m);
                    pair_sims.reserve(m);
                    for i in 0..m {
                        let row = sims.row(i);
                        let mut best = 0;
                        let mut best_sim = f64::NEG_INFINITY;
                        for (j, &eid) in c_edges.iter().enumerate() {
                            let s = if dense { row[eid] } else { row[offset + j] };
                            if s > best_sim {
                                best = j;
                                best_sim = s;
                            }
                        }
                        matched.push(c_edges[best]);
                        pair_sims.push(best_sim.clamp(-1.0, 1.0));
                    }
                }
                offset += size;
                let struct_sim = if pair_sims.is_empty() {
                    0.0
                } else {
                    pair_sims.iter().sum::<f64>() / m as f64
                };
                PairScore {
                    candidate: c,
                    score: SimilarityScore::fuse(self.node_sim(target, c), struct_sim, self.lambda),
                    matched,
                    sims: pair_sims,
                }
            })
            .collect()
    }

    /// Expands a [`PairScore`] into node-pair form.
    pub fn matching(&self, target: usize, p: &PairScore) -> EdgeMatching {
        let sub = self.index.get(target);
        let edges = self.graph.edges();
        EdgeMatching {
            target,
            candidate: p.candidate,
            pairs: sub
                .edges
                .iter()
                .zip(&p.matched)
                .zip(&p.sims)
                .map(|((&te, &ce), &s)| MatchedPair {
                    target_edge: te,
                    candidate_edge: edges[ce],
                    similarity: s,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Split;
    use crate::tensor::xavier_init;

    fn emb(edge: (usize, usize), v: &[f64]) -> EdgeEmbedding {
        EdgeEmbedding {
            edge,
            vector: v.to_vec(),
        }
    }

    #[test]
    fn node_similarity_cases() {
        assert!((node_similarity(&[1.0, 2.0], &[1.0, 2.0]) - 1.0).abs() < 1e-15);
        assert_eq!(node_similarity(&[1.0, 0.0], &[0.0, 1.0]), 0.0);
        assert!((node_similarity(&[1.0, -3.0], &[-1.0, 3.0]) + 1.0).abs() < 1e-15);
        assert_eq!(node_similarity(&[0.0, 0.0], &[1.0, 3.0]), 0.0);
    }

    #[test]
    fn matching_copies_and_forced() {
        let t = vec![emb((0, 1), &[1.0, 0.0]), emb((1, 2), &[0.0, 1.0])];
        let c = vec![emb((5, 6), &[1.0, 0.0]), emb((6, 7), &[0.0, 1.0])];
        let m = match_edges(&t, &c).unwrap();
        assert_eq!(m[0].candidate_edge, (5, 6));
        assert_eq!(m[1].candidate_edge, (6, 7));
        assert!(m.iter().all(|p| (p.similarity - 1.0).abs() < 1e-15));
        let single = match_edges(&t, &c[..1]).unwrap();
        assert!(single.iter().all(|p| p.candidate_edge == (5, 6)));
        assert!(match_edges(&t, &[]).is_none());
    }

    #[test]
    fn matching_tie_goes_to_earliest() {
        let t = vec![emb((0, 1), &[1.0, 0.0])];
        let c = vec![emb((2, 3), &[0.0, 1.0]), emb((3, 4), &[0.0, 1.0])];
        assert_eq!(match_edges(&t, &c).unwrap()[0].candidate_edge, (2, 3));
    }

    #[test]
    fn structure_similarity_cases() {
        let pair = |s| MatchedPair {
            target_edge: (0, 1),
            candidate_edge: (0, 1),
            similarity: s,
        };
        let m = |pairs| EdgeMatching {
            target: 0,
            candidate: 1,
            pairs,
        };
        assert_eq!(structure_similarity(&m(vec![pair(1.0), pair(1.0)])), 1.0);
        assert_eq!(structure_similarity(&m(vec![pair(1.0), pair(0.0)])), 0.5);
        assert_eq!(structure_similarity(&m(vec![])), 0.0);
    }

    #[test]
    fn fusion_arithmetic() {
        let s = SimilarityScore::fuse(0.8, 0.6, 0.5);
        assert!((s.overall - 0.7).abs() < 1e-15);
        assert_eq!(SimilarityScore::fuse(0.3, -0.9, 1.0).overall, 0.3);
    }

    fn toy() -> (Graph, NodeEmbeddings) {
        let g = Graph::new(
            xavier_init(7, 3, 1).unwrap(),
            vec![(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (1, 4)],
            vec![None; 7],
            vec![Split::None; 7],
        )
        .unwrap();
        let h = xavier_init(7, 4, 2).unwrap();
        (g, NodeEmbeddings { h: h.clone(), h_mlp: h })
    }

    #[test]
    fn self_similarity_is_one() {
        let (g, h) = toy();
        let (s, m) = overall_similarity(&g, &h, 2, 2, 0.3, 2).unwrap();
        assert!((s.node_sim - 1.0).abs() < 1e-12);
        assert!((s.struct_sim - 1.0).abs() < 1e-12);
        assert!((s.overall - 1.0).abs() < 1e-12);
        assert!(m.pairs.iter().all(|p| p.target_edge == p.candidate_edge));
    }

    #[test]
    fn isolated_side_has_zero_structure() {
        let (g, h) = toy();
        let (s, m) = overall_similarity(&g, &h, 6, 1, 0.5, 2).unwrap();
        assert_eq!(s.struct_sim, 0.0);
        assert!(m.pairs.is_empty());
        assert_eq!(s.overall, 0.5 * s.node_sim);
    }

    #[test]
    fn scorer_agrees_with_reference() {
        let (g, h) = toy();
        let index = SubgraphIndex::build(&g, 2, 0).unwrap();
        let scorer = Scorer::new(&g, &index, &h.h, 0.5).unwrap();
        for t in 0..7 {
            let all: Vec<usize> = (0..7).collect();
            let batch = scorer.score_against(t, &all);
            for c in 0..7 {
                let (s, m) = overall_similarity(&g, &h, t, c, 0.5, 2).unwrap();
                let single = scorer.score(t, c);
                assert_eq!(single, batch[c], "dense and gathered paths differ");
                assert!((single.score.overall - s.overall).abs() < 1e-12);
                assert_eq!(scorer.matching(t, &single).pairs.len(), m.pairs.len());
                for (a, b) in scorer.matching(t, &single).pairs.iter().zip(&m.pairs) {
                    assert_eq!(a.candidate_edge, b.candidate_edge);
                }
            }
        }
    }
}
