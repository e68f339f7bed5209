#![allow(dead_code)]

pub mod gradcheck;
pub mod invariants;
pub mod oracles;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segnn::graph::{Graph, Split};
use segnn::tensor::Tensor;

/// Two Gaussian-ish blobs of `n / 2` nodes each with mostly intra-class
/// edges. Splits cycle train/val/test so every split holds both classes.
pub fn blob_graph(n: usize, f: usize, seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let half = n / 2;
    let label = |v: usize| usize::from(v >= half);
    let mut feats = Tensor::zeros(n, f);
    for v in 0..n {
        let sign = if label(v) == 0 { 1.0 } else { -1.0 };
        for c in 0..f {
            let center = if c < f / 2 { sign } else { -sign };
            feats.set(v, c, center + rng.gen_range(-1.2..1.2));
        }
    }
    let mut edges = Vec::new();
    for v in 0..n {
        for _ in 0..2 {
            let base = if label(v) == 0 { 0 } else { half };
            let u = base + rng.gen_range(0..half);
            if u != v {
                edges.push((v, u));
            }
        }
        if rng.gen_bool(0.1) {
            let u = rng.gen_range(0..n);
            if u != v {
                edges.push((v, u));
            }
        }
    }
    let labels = (0..n).map(|v| Some(label(v))).collect();
    let splits = (0..n)
        .map(|v| match (v / 2) % 3 {
            0 => Split::Train,
            1 => Split::Val,
            _ => Split::Test,
        })
        .collect();
    Graph::new(feats, edges, labels, splits).unwrap()
}

/// Nearest train-centroid accuracy on `nodes`, from raw features.
pub fn centroid_accuracy(g: &Graph, nodes: &[usize]) -> f64 {
    let c = g.num_classes();
    let f = g.feature_dim();
    let mut sums = vec![vec![0.0; f]; c];
    let mut counts = vec![0usize; c];
    for v in g.train_nodes() {
        let l = g.label(v).unwrap();
        counts[l] += 1;
        for (s, x) in sums[l].iter_mut().zip(g.features().row(v)) {
            *s += x;
        }
    }
    let mut correct = 0;
    for &v in nodes {
        let x = g.features().row(v);
        let best = (0..c)
            .min_by(|&a, &b| {
                let d = |k: usize| -> f64 {
                    x.iter()
                        .zip(&sums[k])
                        .map(|(xi, s)| (xi - s / counts[k] as f64).powi(2))
                        .sum()
                };
                d(a).total_cmp(&d(b))
            })
            .unwrap();
        if Some(best) == g.label(v) {
            correct += 1;
        }
    }
    correct as f64 / nodes.len() as f64
}

/// Citation-like labeled graph: per class, a homophilous random core plus
/// small isolated paths, with sparse binary features that mostly carry
/// class-specific bits.
pub fn cora_like(seed: u64) -> Graph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (classes, core, pockets, f) = (7, 60, 6, 70);
    let mut labels = Vec::new();
    let mut edges = Vec::new();
    for c in 0..classes {
        let base = labels.len();
        labels.extend(std::iter::repeat(Some(c)).take(core));
        for v in 1..core {
            edges.push((base + v, base + rng.gen_range(0..v)));
            if rng.gen_bool(0.5) {
                let u = base + rng.gen_range(0..core);
                if u != base + v {
                    edges.push((base + v, u));
                }
            }
        }
        for _ in 0..pockets {
            let len = rng.gen_range(4..=5);
            let start = labels.len();
            labels.extend(std::iter::repeat(Some(c)).take(len));
            for i in 1..len {
                edges.push((start + i - 1, start + i));
            }
        }
    }
    let n = labels.len();
    for _ in 0..n / 10 {
        let (u, v) = (rng.gen_range(0..n), rng.gen_range(0..n));
        if u != v {
            edges.push((u, v));
        }
    }
    let mut feats = Tensor::zeros(n, f);
    for v in 0..n {
        let c = labels[v].unwrap();
        for j in 0..f {
            let own = j % classes == c;
            let p = if own { 0.3 } else { 0.02 };
            if rng.gen_bool(p) {
                feats.set(v, j, 1.0);
            }
        }
    }
    let splits = (0..n)
        .map(|_| match rng.gen_range(0..10) {
            0..=1 => Split::Train,
            2..=4 => Split::Val,
            _ => Split::Test,
        })
        .collect();
    Graph::new(feats, edges, labels, splits).unwrap()
}
