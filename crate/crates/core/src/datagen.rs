//! Synthetic benchmarks with known explanations: BA-Shapes (planted house
//! motifs) and Syn-Cora (perturbed copies of citation-graph motifs).

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fs;
use std::path::Path;

use rand::seq::index::sample;
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::tensor::Tensor;

pub const GROUND_TRUTH_FILE: &str = "ground_truth.json";

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Correspondence {
    pub copy: (usize, usize),
    pub source: (usize, usize),
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub twin_groups: Vec<Vec<usize>>,
    pub edge_correspondence: Vec<Correspondence>,
    pub motif_edges: Vec<(usize, usize)>,
}

fn canon((u, v): (usize, usize)) -> (usize, usize) {
    (u.min(v), u.max(v))
}

impl GroundTruth {
    /// Checks every structural invariant against `g`.
    pub fn audit(&self, g: &Graph) -> Result<()> {
        let fail = |m: String| Err(Error::Generation(format!("ground truth audit: {m}")));
        let mut seen = HashSet::new();
        for grp in &self.twin_groups {
            for &v in grp {
                if v >= g.node_count() {
                    return fail(format!("twin {v} outside the graph"));
                }
                if !seen.insert(v) {
                    return fail(format!("node {v} in two twin groups"));
                }
            }
        }
        let mut copies = HashSet::new();
        for c in &self.edge_correspondence {
            for e in [c.copy, c.source] {
                if !g.has_edge(e.0, e.1) {
                    return fail(format!("correspondence edge {e:?} is not in the graph"));
                }
            }
            if !copies.insert(canon(c.copy)) {
                return fail(format!("copy edge {:?} corresponds twice", c.copy));
            }
        }
        for &(u, v) in &self.motif_edges {
            if !g.has_edge(u, v) {
                return fail(format!("motif edge ({u}, {v}) is not in the graph"));
            }
        }
        Ok(())
    }

    pub fn save(&self, dir: impl AsRef<Path>) -> Result<()> {
        fs::write(
            dir.as_ref().join(GROUND_TRUTH_FILE),
            serde_json::to_string(self)?,
        )?;
        Ok(())
    }

    pub fn load(dir: impl AsRef<Path>) -> Result<Self> {
        Ok(serde_json::from_str(&fs::read_to_string(
            dir.as_ref().join(GROUND_TRUTH_FILE),
        )?)?)
    }

    /// Source edge of every corresponded copy edge.
    pub fn source_of(&self) -> BTreeMap<(usize, usize), (usize, usize)> {
        self.edge_correspondence
            .iter()
            .map(|c| (canon(c.copy), canon(c.source)))
            .collect()
    }

    /// Twin group index of every grouped node.
    pub fn group_of(&self) -> BTreeMap<usize, usize> {
        self.twin_groups
            .iter()
            .enumerate()
            .flat_map(|(i, grp)| grp.iter().map(move |&v| (v, i)))
            .collect()
    }
}

/// Preferential attachment from an `m`-clique; each new node links to `m`
/// distinct existing nodes chosen proportionally to degree.
pub fn gen_ba_edges<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    if m == 0 || n <= m {
        return Err(Error::Generation(format!("need n > m >= 1, got n={n}, m={m}")));
    }
    let mut edges = Vec::with_capacity(m * (m - 1) / 2 + (n - m) * m);
    // Every endpoint occurrence; uniform draws from it are degree-weighted.
    let mut ends = Vec::new();
    for u in 0..m {
        for v in u + 1..m {
            edges.push((u, v));
            ends.extend([u, v]);
        }
    }
    for v in m..n {
        let mut targets = BTreeSet::new();
        while targets.len() < m {
            let t = if ends.is_empty() {
                rng.gen_range(0..v)
            } else {
                ends[rng.gen_range(0..ends.len())]
            };
            targets.insert(t);
        }
        for t in targets {
            edges.push((t, v));
            ends.extend([t, v]);
        }
    }
    Ok(edges)
}

/// Degree and triangle count of every node.
pub fn structural_features(n: usize, edges: &[(usize, usize)]) -> Tensor {
    let mut adj = vec![BTreeSet::new(); n];
    for &(u, v) in edges {
        adj[u].insert(v);
        adj[v].insert(u);
    }
    let mut feats = Tensor::zeros(n, 2);
    for v in 0..n {
        let nb: Vec<usize> = adj[v].iter().copied().collect();
        let mut tri = 0;
        for (i, &a) in nb.iter().enumerate() {
            for &b in &nb[i + 1..] {
                if adj[a].contains(&b) {
                    tri += 1;
                }
            }
        }
        feats.set(v, 0, nb.len() as f64);
        feats.set(v, 1, tri as f64);
    }
    feats
}

/// Shift and scale every column to zero mean and unit variance. Constant
/// columns are only centered.
pub fn standardize_columns(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    let n = x.rows() as f64;
    for c in 0..x.cols() {
        let mean = (0..x.rows()).map(|r| x.get(r, c)).sum::<f64>() / n;
        let var = (0..x.rows()).map(|r| (x.get(r, c) - mean).powi(2)).sum::<f64>() / n;
        let sd = if var > 0.0 { var.sqrt() } else { 1.0 };
        for r in 0..x.rows() {
            out.set(r, c, (x.get(r, c) - mean) / sd);
        }
    }
    out
}

pub fn gen_ba_graph<R: Rng>(n: usize, m: usize, rng: &mut R) -> Result<Graph> {
    let edges = gen_ba_edges(n, m, rng)?;
    Graph::new(
        structural_features(n, &edges),
        edges,
        vec![Some(0); n],
        vec![Split::None; n],
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BaShapesConfig {
    pub base_nodes: usize,
    pub motifs: usize,
    pub random_edges: usize,
    pub m: usize,
    pub train_fraction: f64,
    pub val_fraction: f64,
    /// Z-score each feature column after counting.
    pub standardize: bool,
}

impl Default for BaShapesConfig {
    fn default() -> Self {
        BaShapesConfig {
            base_nodes: 300,
            motifs: 80,
            random_edges: 70,
            m: 5,
            train_fraction: 0.8,
            val_fraction: 0.1,
            standardize: true,
        }
    }
}

pub const HOUSE_TOP: usize = 1;
pub const HOUSE_MIDDLE: usize = 2;
pub const HOUSE_BOTTOM: usize = 3;

fn split_nodes<R: Rng>(n: usize, train: f64, val: f64, rng: &mut R) -> Vec<Split> {
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = (train * n as f64).round() as usize;
    let n_val = (val * n as f64).round() as usize;
    let mut splits = vec![Split::Test; n];
    for (i, &v) in order.iter().enumerate() {
        splits[v] = if i < n_train {
            Split::Train
        } else if i < n_train + n_val {
            Split::Val
        } else {
            Split::Test
        };
    }
    splits
}

/// BA base graph with planted houses. House `h` occupies ids
/// `base + 5h ..`: bottom pair, middle pair, top. The first bottom node
/// links to a uniformly chosen base node.
pub fn gen_ba_shapes<R: Rng>(cfg: &BaShapesConfig, rng: &mut R) -> Result<(Graph, GroundTruth)> {
    if cfg.train_fraction + cfg.val_fraction > 1.0 {
        return Err(Error::Generation("train + val fractions exceed 1".into()));
    }
    let base = cfg.base_nodes;
    let n = base + 5 * cfg.motifs;
    let mut edges = gen_ba_edges(base, cfg.m, rng)?;
    let mut labels = vec![Some(0); n];
    let mut motif_edges = Vec::with_capacity(6 * cfg.motifs);
    for h in 0..cfg.motifs {
        let o = base + 5 * h;
        let (b1, b2, m1, m2, t) = (o, o + 1, o + 2, o + 3, o + 4);
        for v in [b1, b2] {
            labels[v] = Some(HOUSE_BOTTOM);
        }
        for v in [m1, m2] {
            labels[v] = Some(HOUSE_MIDDLE);
        }
        labels[t] = Some(HOUSE_TOP);
        let house = [(b1, b2), (b1, m1), (b2, m2), (m1, m2), (m1, t), (m2, t)];
        motif_edges.extend(house);
        edges.extend(house);
        edges.push((rng.gen_range(0..base), b1));
    }
    let mut present: HashSet<(usize, usize)> = edges.iter().map(|&e| canon(e)).collect();
    let capacity = n * (n - 1) / 2 - present.len();
    if cfg.random_edges > capacity {
        return Err(Error::Generation("too many random edges requested".into()));
    }
    let mut added = 0;
    while added < cfg.random_edges {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v && present.insert(canon((u, v))) {
            edges.push((u, v));
            added += 1;
        }
    }
    let splits = split_nodes(n, cfg.train_fraction, cfg.val_fraction, rng);
    let mut features = structural_features(n, &edges);
    if cfg.standardize {
        features = standardize_columns(&features);
    }
    let g = Graph::new(features, edges, labels, splits)?;
    let gt = GroundTruth {
        twin_groups: Vec::new(),
        edge_correspondence: Vec::new(),
        motif_edges: motif_edges.into_iter().map(canon).collect(),
    };
    gt.audit(&g)?;
    Ok((g, gt))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynCoraConfig {
    pub motifs_per_class: usize,
    pub min_motif_nodes: usize,
    pub max_motif_nodes: usize,
    pub mask_rates: Vec<f64>,
    pub rewire_rates: Vec<f64>,
    /// Copies generated for every (mask, rewire) setting.
    pub copies_per_setting: usize,
    pub basis_nodes: usize,
    pub attach_edges: usize,
    pub train_fraction: f64,
}

impl Default for SynCoraConfig {
    fn default() -> Self {
        SynCoraConfig {
            motifs_per_class: 3,
            min_motif_nodes: 4,
            max_motif_nodes: 6,
            mask_rates: vec![0.0, 0.1, 0.2, 0.3],
            rewire_rates: vec![0.0, 0.1, 0.2],
            copies_per_setting: 1,
            basis_nodes: 300,
            attach_edges: 3,
            train_fraction: 0.3,
        }
    }
}

impl SynCoraConfig {
    /// A single exact copy of every motif.
    pub fn zero_noise() -> Self {
        SynCoraConfig {
            mask_rates: vec![0.0],
            rewire_rates: vec![0.0],
            ..SynCoraConfig::default()
        }
    }
}

struct Motif {
    label: usize,
    /// Source node ids, sorted.
    nodes: Vec<usize>,
    /// Edges as local position pairs.
    edges: Vec<(usize, usize)>,
}

/// Two-hop local graphs whose nodes all share the center's label.
fn pick_motifs<R: Rng>(src: &Graph, cfg: &SynCoraConfig, rng: &mut R) -> Result<Vec<Motif>> {
    let mut by_class: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for v in 0..src.node_count() {
        if let Some(l) = src.label(v) {
            by_class.entry(l).or_default().push(v);
        }
    }
    let mut used = HashSet::new();
    let mut motifs = Vec::new();
    for (&class, members) in &by_class {
        let mut order = members.clone();
        order.shuffle(rng);
        let mut found = 0;
        for &c in &order {
            if found == cfg.motifs_per_class {
                break;
            }
            let region: Vec<usize> = src.hop_distances(c, 2).into_iter().map(|(v, _)| v).collect();
            if region.len() < cfg.min_motif_nodes
                || region.len() > cfg.max_motif_nodes
                || region.iter().any(|&v| src.label(v) != Some(class) || used.contains(&v))
            {
                continue;
            }
            let mut nodes = region;
            nodes.sort_unstable();
            let pos: BTreeMap<usize, usize> = nodes.iter().enumerate().map(|(i, &v)| (v, i)).collect();
            let mut edges = Vec::new();
            for &u in &nodes {
                for &(w, _) in src.neighbors(u) {
                    if u < w {
                        if let Some(&pw) = pos.get(&w) {
                            edges.push((pos[&u], pw));
                        }
                    }
                }
            }
            edges.sort_unstable();
            used.extend(nodes.iter().copied());
            motifs.push(Motif {
                label: class,
                nodes,
                edges,
            });
            found += 1;
        }
        if found < cfg.motifs_per_class {
            return Err(Error::Generation(format!(
                "class {class} has only {found} eligible motif centers"
            )));
        }
    }
    Ok(motifs)
}

/// BFS regions avoiding `excluded` until `size` nodes are collected.
fn pick_basis<R: Rng>(
    src: &Graph,
    excluded: &HashSet<usize>,
    size: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let mut free: Vec<usize> = (0..src.node_count()).filter(|v| !excluded.contains(v)).collect();
    if free.len() < size {
        return Err(Error::Generation(format!(
            "source graph has {} nodes outside the motifs, basis needs {size}",
            free.len()
        )));
    }
    free.shuffle(rng);
    let mut taken = HashSet::new();
    let mut basis = Vec::new();
    for &start in &free {
        if basis.len() == size {
            break;
        }
        if taken.contains(&start) {
            continue;
        }
        let mut queue = std::collections::VecDeque::from([start]);
        taken.insert(start);
        while let Some(u) = queue.pop_front() {
            basis.push(u);
            if basis.len() == size {
                break;
            }
            for &(w, _) in src.neighbors(u) {
                if !excluded.contains(&w) && taken.insert(w) {
                    queue.push_back(w);
                }
            }
        }
    }
    basis.sort_unstable();
    Ok(basis)
}

/// Moves one endpoint of `count` distinct edges to another in-motif node.
/// Returns the new edge list and, per edge, whether it was rewired.
fn rewire<R: Rng>(
    size: usize,
    edges: &[(usize, usize)],
    count: usize,
    rng: &mut R,
) -> (Vec<(usize, usize)>, Vec<bool>) {
    let mut out: Vec<(usize, usize)> = edges.to_vec();
    let mut moved = vec![false; edges.len()];
    if count == 0 || edges.is_empty() {
        return (out, moved);
    }
    let mut present: HashSet<(usize, usize)> = edges.iter().copied().collect();
    let mut order: Vec<usize> = (0..edges.len()).collect();
    order.shuffle(rng);
    let mut done = 0;
    for i in order {
        if done == count {
            break;
        }
        let (a, b) = out[i];
        let (keep, _) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        let options: Vec<usize> = (0..size)
            .filter(|&w| w != keep && !present.contains(&canon((keep, w))))
            .collect();
        if options.is_empty() {
            continue;
        }
        let w = options[rng.gen_range(0..options.len())];
        present.remove(&out[i]);
        out[i] = canon((keep, w));
        present.insert(out[i]);
        moved[i] = true;
        done += 1;
    }
    (out, moved)
}

/// Builds Syn-Cora from a labeled citation graph. Output ids: basis nodes
/// first, then every motif instance (the original, then its noisy copies).
/// All instances of a motif attach to the basis through the same in-motif
/// positions and basis nodes, so zero-noise copies are exact twins.
pub fn gen_syn_cora<R: Rng>(
    src: &Graph,
    cfg: &SynCoraConfig,
    rng: &mut R,
) -> Result<(Graph, GroundTruth)> {
    for &r in cfg.mask_rates.iter().chain(&cfg.rewire_rates) {
        if !(0.0..=1.0).contains(&r) {
            return Err(Error::Generation(format!("noise rate {r} outside [0, 1]")));
        }
    }
    if cfg.mask_rates.is_empty() || cfg.rewire_rates.is_empty() || cfg.copies_per_setting == 0 {
        return Err(Error::Generation("noise schedule is empty".into()));
    }
    let motifs = pick_motifs(src, cfg, rng)?;
    let excluded: HashSet<usize> = motifs.iter().flat_map(|m| m.nodes.iter().copied()).collect();
    let basis = pick_basis(src, &excluded, cfg.basis_nodes, rng)?;
    let f = src.feature_dim();

    let basis_pos: BTreeMap<usize, usize> = basis.iter().enumerate().map(|(i, &v)| (v, i)).collect();
    let mut rows: Vec<Vec<f64>> = basis.iter().map(|&v| src.features().row(v).to_vec()).collect();
    let mut labels: Vec<Option<usize>> = basis.iter().map(|&v| src.label(v)).collect();
    let mut edges: Vec<(usize, usize)> = Vec::new();
    for (&v, &i) in &basis_pos {
        for &(w, _) in src.neighbors(v) {
            if let Some(&j) = basis_pos.get(&w) {
                if i < j {
                    edges.push((i, j));
                }
            }
        }
    }
    let mut motif_nodes = Vec::new();
    let mut gt = GroundTruth::default();

    for m in &motifs {
        let size = m.nodes.len();
        let attach_pos: Vec<usize> = sample(rng, size, cfg.attach_edges.min(size)).into_vec();
        let attach_to: Vec<usize> = sample(rng, basis.len(), attach_pos.len()).into_vec();
        let mut groups = vec![Vec::new(); size];
        let mut settings = vec![None];
        for &mr in &cfg.mask_rates {
            for &rr in &cfg.rewire_rates {
                for _ in 0..cfg.copies_per_setting {
                    settings.push(Some((mr, rr)));
                }
            }
        }
        let original_offset = rows.len();
        for setting in settings {
            let offset = rows.len();
            let (mask, rewire_rate) = setting.unwrap_or((0.0, 0.0));
            let k = (mask * f as f64).floor() as usize;
            for (p, &v) in m.nodes.iter().enumerate() {
                let mut row = src.features().row(v).to_vec();
                if k > 0 {
                    for c in sample(rng, f, k) {
                        row[c] = 0.0;
                    }
                }
                rows.push(row);
                labels.push(Some(m.label));
                motif_nodes.push(offset + p);
                groups[p].push(offset + p);
            }
            let count = (rewire_rate * m.edges.len() as f64).round() as usize;
            let (local, moved) = rewire(size, &m.edges, count, rng);
            for (i, &(a, b)) in local.iter().enumerate() {
                let e = (offset + a, offset + b);
                edges.push(e);
                if !moved[i] {
                    let (sa, sb) = m.edges[i];
                    gt.edge_correspondence.push(Correspondence {
                        copy: e,
                        source: (original_offset + sa, original_offset + sb),
                    });
                }
            }
            for (&p, &b) in attach_pos.iter().zip(&attach_to) {
                edges.push((b, offset + p));
            }
        }
        gt.twin_groups.extend(groups);
    }

    let n = rows.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let n_train = (cfg.train_fraction * n as f64).round() as usize;
    let mut splits = vec![Split::Val; n];
    for &v in &motif_nodes {
        splits[v] = Split::Test;
    }
    for &v in &order[..n_train] {
        splits[v] = Split::Train;
    }
    let g = Graph::new(Tensor::from_rows(&rows)?, edges, labels, splits)?;
    gt.audit(&g)?;
    Ok((g, gt))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rng(s: u64) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(s)
    }

    #[test]
    fn ba_small_cases() {
        let e = gen_ba_edges(4, 3, &mut rng(1)).unwrap();
        let g = Graph::new(Tensor::zeros(4, 1), e, vec![None; 4], vec![Split::None; 4]).unwrap();
        assert_eq!(g.edge_count(), 6);
        let e = gen_ba_edges(50, 3, &mut rng(2)).unwrap();
        assert_eq!(e.len(), 3 + 47 * 3);
        assert!(gen_ba_edges(3, 3, &mut rng(1)).is_err());
        assert_eq!(gen_ba_edges(5, 1, &mut rng(1)).unwrap().len(), 4);
    }

    #[test]
    fn structural_features_of_triangle_plus_tail() {
        let f = structural_features(4, &[(0, 1), (1, 2), (0, 2), (2, 3)]);
        assert_eq!(f.row(2), &[3.0, 1.0]);
        assert_eq!(f.row(3), &[1.0, 0.0]);
    }

    #[test]
    fn standardized_columns() {
        let x = Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        let z = standardize_columns(&x);
        assert_eq!(z.row(0), &[-1.0, 0.0]);
        assert_eq!(z.row(1), &[1.0, 0.0]);
    }

    #[test]
    fn ba_shapes_without_motifs_is_plain_ba() {
        let cfg = BaShapesConfig {
            motifs: 0,
            random_edges: 0,
            ..BaShapesConfig::default()
        };
        let (g, gt) = gen_ba_shapes(&cfg, &mut rng(3)).unwrap();
        assert_eq!(g.node_count(), 300);
        assert!(g.labels().iter().all(|l| *l == Some(0)));
        assert!(gt.motif_edges.is_empty());
    }

    #[test]
    fn rewire_moves_exactly_count() {
        let edges = vec![(0, 1), (1, 2), (2, 3), (0, 3)];
        let (out, moved) = rewire(5, &edges, 2, &mut rng(4));
        assert_eq!(moved.iter().filter(|&&m| m).count(), 2);
        let set: HashSet<_> = out.iter().collect();
        assert_eq!(set.len(), 4);
        assert!(out.iter().all(|(a, b)| a < b));
    }
}
