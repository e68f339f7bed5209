//! Attributed undirected graphs, normalized adjacency and n-hop subgraphs.

use std::collections::VecDeque;
use std::sync::Arc;

use rayon::prelude::*;

use crate::error::{contract, Error, Result};
use crate::tensor::{CsrMatrix, Tensor};

/// Membership of a node in the data split.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Split {
    Train,
    Val,
    Test,
    None,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Val => "val",
            Split::Test => "test",
            Split::None => "none",
        }
    }

    pub fn parse(s: &str) -> Option<Split> {
        match s {
            "train" => Some(Split::Train),
            "val" => Some(Split::Val),
            "test" => Some(Split::Test),
            "none" => Some(Split::None),
            _ => None,
        }
    }
}

/// Undirected, unweighted attributed graph with labels and split masks.
///
/// Edges are stored once as `(u, v)` with `u < v`, sorted; an edge's id is
/// its position in that list.
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    edges: Vec<(usize, usize)>,
    features: Tensor,
    labels: Vec<Option<usize>>,
    splits: Vec<Split>,
    adjacency: Vec<Vec<(usize, usize)>>,
}

impl Graph {
    /// Validates and canonicalises the inputs. Reversed and repeated edge
    /// pairs collapse into one stored edge.
    pub fn new(
        features: Tensor,
        edges: impl IntoIterator<Item = (usize, usize)>,
        labels: Vec<Option<usize>>,
        splits: Vec<Split>,
    ) -> Result<Graph> {
        let n = features.rows();
        if labels.len() != n || splits.len() != n {
            return Err(Error::Validation(format!(
                "{n} feature rows but {} labels and {} split entries",
                labels.len(),
                splits.len()
            )));
        }
        let mut canon = Vec::new();
        for (u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Validation(format!(
                    "edge ({u}, {v}) has an endpoint outside 0..{n}"
                )));
            }
            if u == v {
                return Err(Error::Validation(format!("self-loop on node {u}")));
            }
            canon.push((u.min(v), u.max(v)));
        }
        canon.sort_unstable();
        canon.dedup();
        for (i, s) in splits.iter().enumerate() {
            if *s == Split::Train && labels[i].is_none() {
                return Err(Error::Validation(format!("train node {i} has no label")));
            }
        }
        let mut adjacency = vec![Vec::new(); n];
        for (id, &(u, v)) in canon.iter().enumerate() {
            adjacency[u].push((v, id));
            adjacency[v].push((u, id));
        }
        for list in &mut adjacency {
            list.sort_unstable();
        }
        Ok(Graph {
            edges: canon,
            features,
            labels,
            splits,
            adjacency,
        })
    }

    pub fn node_count(&self) -> usize {
        self.features.rows()
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.cols()
    }

    pub fn edges(&self) -> &[(usize, usize)] {
        &self.edges
    }

    pub fn features(&self) -> &Tensor {
        &self.features
    }

    pub fn labels(&self) -> &[Option<usize>] {
        &self.labels
    }

    pub fn label(&self, v: usize) -> Option<usize> {
        self.labels[v]
    }

    pub fn splits(&self) -> &[Split] {
        &self.splits
    }

    /// Number of classes, taken as one past the largest label.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().flatten().max().map_or(0, |m| m + 1)
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adjacency[v].len()
    }

    /// `(neighbor, edge id)` pairs sorted by neighbor.
    pub fn neighbors(&self, v: usize) -> &[(usize, usize)] {
        &self.adjacency[v]
    }

    pub fn edge_id(&self, u: usize, v: usize) -> Option<usize> {
        self.edges.binary_search(&(u.min(v), u.max(v))).ok()
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.edge_id(u, v).is_some()
    }

    pub fn nodes_in(&self, split: Split) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&v| self.splits[v] == split)
            .collect()
    }

    pub fn train_nodes(&self) -> Vec<usize> {
        self.nodes_in(Split::Train)
    }

    pub fn val_nodes(&self) -> Vec<usize> {
        self.nodes_in(Split::Val)
    }

    pub fn test_nodes(&self) -> Vec<usize> {
        self.nodes_in(Split::Test)
    }

    pub fn isolated_nodes(&self) -> Vec<usize> {
        (0..self.node_count())
            .filter(|&v| self.adjacency[v].is_empty())
            .collect()
    }

    /// Same nodes, labels and splits with new features and edges.
    pub fn with_parts(
        &self,
        features: Tensor,
        edges: impl IntoIterator<Item = (usize, usize)>,
    ) -> Result<Graph> {
        if features.rows() != self.node_count() {
            return contract("replacement features must keep the node count");
        }
        Graph::new(features, edges, self.labels.clone(), self.splits.clone())
    }

    pub fn with_splits(&self, splits: Vec<Split>) -> Result<Graph> {
        Graph::new(
            self.features.clone(),
            self.edges.iter().copied(),
            self.labels.clone(),
            splits,
        )
    }

    /// Breadth-first hop distances from `center`, cut at `max_hop`.
    pub fn hop_distances(&self, center: usize, max_hop: usize) -> Vec<(usize, usize)> {
        let mut dist = vec![usize::MAX; self.node_count()];
        let mut order = vec![(center, 0)];
        dist[center] = 0;
        let mut queue = VecDeque::from([center]);
        while let Some(u) = queue.pop_front() {
            if dist[u] == max_hop {
                continue;
            }
            for &(w, _) in &self.adjacency[u] {
                if dist[w] == usize::MAX {
                    dist[w] = dist[u] + 1;
                    order.push((w, dist[w]));
                    queue.push_back(w);
                }
            }
        }
        order
    }

    /// Induced subgraph on the largest connected component, ids remapped
    /// in increasing order. Ties between equal-size components go to the
    /// one containing the smallest node id.
    pub fn largest_connected_component(&self) -> Result<(Graph, Vec<usize>)> {
        let n = self.node_count();
        let mut comp = vec![usize::MAX; n];
        let mut best: (usize, usize) = (0, 0);
        let mut next = 0;
        for s in 0..n {
            if comp[s] != usize::MAX {
                continue;
            }
            let mut size = 0;
            let mut stack = vec![s];
            comp[s] = next;
            while let Some(u) = stack.pop() {
                size += 1;
                for &(w, _) in &self.adjacency[u] {
                    if comp[w] == usize::MAX {
                        comp[w] = next;
                        stack.push(w);
                    }
                }
            }
            if size > best.1 {
                best = (next, size);
            }
            next += 1;
        }
        let keep: Vec<usize> = (0..n).filter(|&v| comp[v] == best.0).collect();
        let mut remap = vec![usize::MAX; n];
        for (new, &old) in keep.iter().enumerate() {
            remap[old] = new;
        }
        let features = self.features.gather_rows(&keep);
        let edges = self
            .edges
            .iter()
            .filter(|(u, _)| comp[*u] == best.0)
            .map(|&(u, v)| (remap[u], remap[v]));
        let labels = keep.iter().map(|&v| self.labels[v]).collect();
        let splits = keep.iter().map(|&v| self.splits[v]).collect();
        Ok((Graph::new(features, edges, labels, splits)?, keep))
    }
}

/// `D^-1/2 (A + I) D^-1/2` in compressed-row form.
#[derive(Clone, Debug)]
pub struct NormalizedAdjacency {
    matrix: Arc<CsrMatrix>,
}

impl NormalizedAdjacency {
    pub fn matrix(&self) -> &Arc<CsrMatrix> {
        &self.matrix
    }

    pub fn node_count(&self) -> usize {
        self.matrix.n()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix.get(i, j)
    }
}

pub fn normalize_adjacency(g: &Graph) -> NormalizedAdjacency {
    let n = g.node_count();
    let inv_sqrt: Vec<f64> = (0..n)
        .map(|v| 1.0 / ((g.degree(v) + 1) as f64).sqrt())
        .collect();
    let mut entries = Vec::with_capacity(n + 2 * g.edge_count());
    for v in 0..n {
        entries.push((v, v, inv_sqrt[v] * inv_sqrt[v]));
    }
    for &(u, v) in g.edges() {
        let w = inv_sqrt[u] * inv_sqrt[v];
        entries.push((u, v, w));
        entries.push((v, u, w));
    }
    NormalizedAdjacency {
        matrix: Arc::new(CsrMatrix::from_triplets(n, entries)),
    }
}

/// The n-hop local graph around a center node.
#[derive(Clone, Debug, PartialEq)]
pub struct Subgraph {
    pub center: usize,
    pub hop: usize,
    /// Sorted node ids, center included.
    pub nodes: Vec<usize>,
    /// Sorted `(min, max)` pairs.
    pub edges: Vec<(usize, usize)>,
    /// Ids of `edges` in the parent graph, same order.
    pub edge_ids: Vec<usize>,
}

impl Subgraph {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }
}

pub fn khop_subgraph(g: &Graph, center: usize, n: usize) -> Result<Subgraph> {
    khop_subgraph_capped(g, center, n, 0)
}

/// Like [`khop_subgraph`], keeping at most `max_edges` edges (0 = all).
/// When capped, edges nearest the center survive: ranked by the farther
/// endpoint's hop distance, then the nearer one's, then by id.
pub fn khop_subgraph_capped(
    g: &Graph,
    center: usize,
    n: usize,
    max_edges: usize,
) -> Result<Subgraph> {
    if center >= g.node_count() {
        return contract(format!(
            "center {center} outside 0..{}",
            g.node_count()
        ));
    }
    if n == 0 {
        return contract("subgraph hop count must be at least 1");
    }
    let order = g.hop_distances(center, n);
    let mut dist = std::collections::HashMap::with_capacity(order.len());
    for &(v, d) in &order {
        dist.insert(v, d);
    }
    let mut ids = Vec::new();
    for &(u, du) in &order {
        for &(w, eid) in g.neighbors(u) {
            if u < w {
                if let Some(&dw) = dist.get(&w) {
                    ids.push((du.max(dw), du.min(dw), eid));
                }
            }
        }
    }
    if max_edges > 0 && ids.len() > max_edges {
        ids.sort_unstable();
        ids.truncate(max_edges);
    }
    let mut edge_ids: Vec<usize> = ids.into_iter().map(|(_, _, e)| e).collect();
    edge_ids.sort_unstable();
    let mut nodes: Vec<usize> = order.into_iter().map(|(v, _)| v).collect();
    nodes.sort_unstable();
    Ok(Subgraph {
        center,
        hop: n,
        nodes,
        edges: edge_ids.iter().map(|&e| g.edges()[e]).collect(),
        edge_ids,
    })
}

/// Subgraphs of every node for one hop setting.
#[derive(Clone, Debug)]
pub struct SubgraphIndex {
    pub hop: usize,
    pub max_edges: usize,
    subgraphs: Vec<Subgraph>,
}

impl SubgraphIndex {
    pub fn build(g: &Graph, hop: usize, max_edges: usize) -> Result<Self> {
        let subgraphs = (0..g.node_count())
            .into_par_iter()
            .map(|v| khop_subgraph_capped(g, v, hop, max_edges))
            .collect::<Result<Vec<_>>>()?;
        Ok(SubgraphIndex {
            hop,
            max_edges,
            subgraphs,
        })
    }

    pub fn get(&self, v: usize) -> &Subgraph {
        &self.subgraphs[v]
    }

    pub fn len(&self) -> usize {
        self.subgraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.subgraphs.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn bare(n: usize, edges: &[(usize, usize)]) -> Graph {
        Graph::new(
            Tensor::zeros(n, 1),
            edges.iter().copied(),
            vec![None; n],
            vec![Split::None; n],
        )
        .unwrap()
    }

    #[test]
    fn reversed_pairs_dedup() {
        let g = bare(2, &[(0, 1), (1, 0)]);
        assert_eq!(g.edges(), &[(0, 1)]);
    }

    #[test]
    fn rejects_self_loops_and_out_of_range() {
        assert!(Graph::new(Tensor::zeros(2, 1), [(1, 1)], vec![None; 2], vec![Split::None; 2]).is_err());
        assert!(Graph::new(Tensor::zeros(2, 1), [(0, 2)], vec![None; 2], vec![Split::None; 2]).is_err());
    }

    #[test]
    fn train_nodes_need_labels() {
        let r = Graph::new(Tensor::zeros(1, 1), [], vec![None], vec![Split::Train]);
        assert!(matches!(r, Err(Error::Validation(_))));
    }

    #[test]
    fn isolated_node_normalizes_to_one() {
        let a = normalize_adjacency(&bare(1, &[]));
        assert_eq!(a.get(0, 0), 1.0);
    }

    #[test]
    fn single_edge_all_half() {
        let a = normalize_adjacency(&bare(2, &[(0, 1)]));
        for i in 0..2 {
            for j in 0..2 {
                assert!((a.get(i, j) - 0.5).abs() < 1e-15);
            }
        }
    }

    #[test]
    fn isolated_center_subgraph() {
        let g = bare(3, &[(1, 2)]);
        let s = khop_subgraph(&g, 0, 2).unwrap();
        assert_eq!(s.nodes, vec![0]);
        assert!(s.edges.is_empty());
    }

    #[test]
    fn star_one_hop() {
        let g = bare(5, &[(0, 1), (0, 2), (0, 3), (0, 4)]);
        let s = khop_subgraph(&g, 0, 1).unwrap();
        assert_eq!(s.nodes.len(), 5);
        assert_eq!(s.edges.len(), 4);
    }

    #[test]
    fn path_depth_cut() {
        let g = bare(4, &[(0, 1), (1, 2), (2, 3)]);
        let s = khop_subgraph(&g, 0, 2).unwrap();
        assert_eq!(s.nodes, vec![0, 1, 2]);
        assert_eq!(s.edges, vec![(0, 1), (1, 2)]);
    }

    #[test]
    fn cap_keeps_edges_nearest_center() {
        // Triangle 0-1-2 plus a pendant path 2-3.
        let g = bare(4, &[(0, 1), (0, 2), (1, 2), (2, 3)]);
        let s = khop_subgraph_capped(&g, 0, 2, 2).unwrap();
        assert_eq!(s.edges, vec![(0, 1), (0, 2)]);
        let full = khop_subgraph_capped(&g, 0, 2, 0).unwrap();
        assert_eq!(full.edges.len(), 4);
    }

    #[test]
    fn largest_component_remaps() {
        let g = bare(6, &[(0, 1), (2, 3), (3, 4), (4, 2)]);
        let (lcc, keep) = g.largest_connected_component().unwrap();
        assert_eq!(keep, vec![2, 3, 4]);
        assert_eq!(lcc.edges(), &[(0, 1), (0, 2), (1, 2)]);
    }
}
