//! Brute-force reference implementations and random small instances.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segnn::encoder::EdgeEmbedding;
use segnn::eval::{explanation_auc, precision_at_k};
use segnn::explain::k_nearest_labeled;
use segnn::graph::{normalize_adjacency, Graph, Split, SubgraphIndex};
use segnn::similarity::{match_edges, Scorer};
use segnn::tensor::Tensor;

pub const MAX_NODES: usize = 30;
pub const MAX_SUBGRAPH_EDGES: usize = 6;

/// Random graph on at most 30 nodes with one random label per node.
pub fn random_graph(rng: &mut ChaCha8Rng) -> Graph {
    let n = rng.gen_range(2..=MAX_NODES);
    let m = rng.gen_range(0..=2 * n);
    let mut edges = Vec::new();
    for _ in 0..m {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v && !edges.contains(&(u, v)) && !edges.contains(&(v, u)) {
            edges.push((u, v));
        }
    }
    let classes = rng.gen_range(1..=3);
    let labels = (0..n).map(|_| Some(rng.gen_range(0..classes))).collect();
    let splits = (0..n)
        .map(|_| if rng.gen_bool(0.5) { Split::Train } else { Split::Test })
        .collect();
    Graph::new(Tensor::zeros(n, 1), edges, labels, splits).unwrap()
}

/// Embedding rows drawn from a small pool so exact ties occur.
fn tied_rows(n: usize, d: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let pool: Vec<Vec<f64>> = (0..4)
        .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .collect();
    let mut t = Tensor::zeros(n, d);
    for r in 0..n {
        let row = if rng.gen_bool(0.4) {
            pool.choose(rng).unwrap().clone()
        } else {
            (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
        };
        for (c, x) in row.into_iter().enumerate() {
            t.set(r, c, x);
        }
    }
    t
}

pub fn dense_normalized(g: &Graph) -> Vec<Vec<f64>> {
    let n = g.node_count();
    let mut a = vec![vec![0.0; n]; n];
    for i in 0..n {
        a[i][i] = 1.0;
    }
    for &(u, v) in g.edges() {
        a[u][v] = 1.0;
        a[v][u] = 1.0;
    }
    let d: Vec<f64> = a.iter().map(|row| 1.0 / row.iter().sum::<f64>().sqrt()).collect();
    let mut out = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in 0..n {
            let mut s = 0.0;
            for k in 0..n {
                let dik = if i == k { d[i] } else { 0.0 };
                for l in 0..n {
                    let dlj = if l == j { d[j] } else { 0.0 };
                    s += dik * a[k][l] * dlj;
                }
            }
            out[i][j] = s;
        }
    }
    out
}

pub fn check_normalize(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g = random_graph(&mut rng);
    let want = dense_normalized(&g);
    let got = normalize_adjacency(&g);
    for (i, row) in want.iter().enumerate() {
        for (j, &w) in row.iter().enumerate() {
            if got.get(i, j) != w {
                return Err(format!("seed {seed}: entry ({i},{j}) {} vs {w}", got.get(i, j)));
            }
        }
    }
    Ok(())
}

fn oracle_cosine(a: &[f64], b: &[f64]) -> f64 {
    let (mut ab, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for i in 0..a.len() {
        ab += a[i] * b[i];
        aa += a[i] * a[i];
        bb += b[i] * b[i];
    }
    if aa == 0.0 || bb == 0.0 {
        0.0
    } else {
        ab / (aa.sqrt() * bb.sqrt())
    }
}

/// For every target edge, every candidate is compared; the first maximum wins.
pub fn oracle_matching(t: &[EdgeEmbedding], c: &[EdgeEmbedding]) -> Option<Vec<(usize, f64)>> {
    if c.is_empty() {
        return None;
    }
    Some(
        t.iter()
            .map(|te| {
                let sims: Vec<f64> = c.iter().map(|ce| oracle_cosine(&te.vector, &ce.vector)).collect();
                let max = sims.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let first = sims.iter().position(|&s| s == max).unwrap();
                (first, max)
            })
            .collect(),
    )
}

fn random_edges(count: usize, d: usize, pool: &[Vec<f64>], rng: &mut ChaCha8Rng) -> Vec<EdgeEmbedding> {
    (0..count)
        .map(|i| EdgeEmbedding {
            edge: (i, i + 1),
            vector: if rng.gen_bool(0.4) {
                pool.choose(rng).unwrap().clone()
            } else {
                (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()
            },
        })
        .collect()
}

pub fn check_matching(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let d = rng.gen_range(1..5);
    let mut pool: Vec<Vec<f64>> = (0..3).map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect()).collect();
    pool.push(vec![0.0; d]);
    let nt = rng.gen_range(0..=MAX_SUBGRAPH_EDGES);
    let nc = rng.gen_range(0..=MAX_SUBGRAPH_EDGES);
    let t = random_edges(nt, d, &pool, &mut rng);
    let c = random_edges(nc, d, &pool, &mut rng);
    let got = match_edges(&t, &c);
    let want = oracle_matching(&t, &c);
    match (got, want) {
        (None, None) => Ok(()),
        (Some(got), Some(want)) => {
            for (p, (j, s)) in got.iter().zip(&want) {
                if p.candidate_edge != c[*j].edge || p.similarity != *s {
                    return Err(format!("seed {seed}: {p:?} vs ({j}, {s})"));
                }
            }
            if got.len() != want.len() {
                return Err(format!("seed {seed}: pair count differs"));
            }
            Ok(())
        }
        (g, w) => Err(format!("seed {seed}: {g:?} vs {w:?}")),
    }
}

/// Random graph, tied embeddings, subgraphs capped at six edges.
pub struct RetrievalCase {
    pub graph: Graph,
    pub index: SubgraphIndex,
    pub h: Tensor,
    pub lambda: f64,
}

pub fn retrieval_case(seed: u64) -> RetrievalCase {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let graph = random_graph(&mut rng);
    let d = rng.gen_range(1..5);
    let h = tied_rows(graph.node_count(), d, &mut rng);
    let index = SubgraphIndex::build(&graph, 2, MAX_SUBGRAPH_EDGES).unwrap();
    let lambda = [0.0, 0.5, 1.0, rng.gen_range(0.0..1.0)][rng.gen_range(0..4)];
    RetrievalCase { graph, index, h, lambda }
}

/// Repeated selection of the best remaining candidate by (score desc, id asc).
pub fn oracle_knn(scores: &[(usize, f64)], k: usize) -> Vec<usize> {
    let mut left: Vec<(usize, f64)> = scores.to_vec();
    let mut out = Vec::new();
    while out.len() < k && !left.is_empty() {
        let mut best = 0;
        for i in 1..left.len() {
            let (id, s) = left[i];
            let (bid, bs) = left[best];
            if s > bs || (s == bs && id < bid) {
                best = i;
            }
        }
        out.push(left.remove(best).0);
    }
    out
}

pub fn check_knn(seed: u64) -> Result<(), String> {
    let case = retrieval_case(seed);
    let g = &case.graph;
    let scorer = Scorer::new(g, &case.index, &case.h, case.lambda).unwrap();
    let labeled = g.train_nodes();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA5A5);
    for target in 0..g.node_count() {
        let cands: Vec<usize> = labeled.iter().copied().filter(|&v| v != target).collect();
        if cands.is_empty() {
            continue;
        }
        let k = rng.gen_range(1..=cands.len() + 2);
        let scores: Vec<(usize, f64)> = cands.iter().map(|&c| (c, scorer.score(target, c).score.overall)).collect();
        let want = oracle_knn(&scores, k);
        let got: Vec<usize> = k_nearest_labeled(&scorer, target, &labeled, k)
            .map_err(|e| e.to_string())?
            .neighbors
            .iter()
            .map(|n| n.id)
            .collect();
        if got != want {
            return Err(format!("seed {seed} target {target}: {got:?} vs {want:?}"));
        }
    }
    Ok(())
}

pub fn oracle_precision(targets: &[usize], ranked: &[Vec<usize>], k: usize) -> f64 {
    let mut total = 0.0;
    for (t, r) in targets.iter().zip(ranked) {
        let mut hits = 0;
        for l in r.iter().take(k) {
            if l == t {
                hits += 1;
            }
        }
        total += hits as f64 / k as f64;
    }
    total / targets.len() as f64
}

pub fn check_precision(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=12);
    let classes = rng.gen_range(1..=4);
    let depth = rng.gen_range(1..=8);
    let targets: Vec<usize> = (0..n).map(|_| rng.gen_range(0..classes)).collect();
    let ranked: Vec<Vec<usize>> = (0..n)
        .map(|_| (0..depth).map(|_| rng.gen_range(0..classes)).collect())
        .collect();
    let ks: Vec<usize> = (1..=depth).collect();
    let got = precision_at_k(&targets, &ranked, &ks).map_err(|e| e.to_string())?;
    for k in ks {
        let want = oracle_precision(&targets, &ranked, k);
        if got[&k] != want {
            return Err(format!("seed {seed} k {k}: {} vs {want}", got[&k]));
        }
    }
    Ok(())
}

/// Mann-Whitney statistic from average ranks.
pub fn oracle_auc(scores: &[f64], truth: &[bool]) -> Option<f64> {
    let n = scores.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && scores[order[j + 1]] == scores[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &o in &order[i..=j] {
            rank[o] = avg;
        }
        i = j + 1;
    }
    let pos = truth.iter().filter(|&&t| t).count();
    let neg = n - pos;
    if pos == 0 || neg == 0 {
        return None;
    }
    let r: f64 = (0..n).filter(|&i| truth[i]).map(|i| rank[i]).sum();
    Some((r - (pos * (pos + 1)) as f64 / 2.0) / (pos * neg) as f64)
}

pub fn check_auc(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(1..=MAX_SUBGRAPH_EDGES * 3);
    let levels = rng.gen_range(1..=5);
    let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..levels) as f64 / 4.0).collect();
    let truth: Vec<bool> = (0..n).map(|_| rng.gen_bool(0.4)).collect();
    let got = explanation_auc(&scores, &truth);
    let want = oracle_auc(&scores, &truth);
    if got != want {
        return Err(format!("seed {seed}: {got:?} vs {want:?}"));
    }
    Ok(())
}

pub type Check = fn(u64) -> Result<(), String>;

pub const CHECKS: [(&str, Check); 5] = [
    ("normalize_adjacency", check_normalize),
    ("match_edges", check_matching),
    ("k_nearest_labeled", check_knn),
    ("precision_at_k", check_precision),
    ("explanation_auc", check_auc),
];
