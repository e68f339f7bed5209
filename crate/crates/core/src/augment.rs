//! Stochastic graph augmentations: attribute masking and edge perturbation.

use std::collections::HashSet;

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{contract, Result};
use crate::graph::Graph;

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Augmentation {
    /// Zero `rate * F` feature columns, chosen per node independently.
    AttributeMask(f64),
    /// Replace `rate * |E|` edges with previously absent pairs.
    EdgePerturb(f64),
}

impl Augmentation {
    pub fn rate(self) -> f64 {
        match self {
            Augmentation::AttributeMask(r) | Augmentation::EdgePerturb(r) => r,
        }
    }
}

pub fn augment(g: &Graph, mode: Augmentation, seed: u64) -> Result<Graph> {
    augment_with_rng(g, mode, &mut ChaCha8Rng::seed_from_u64(seed))
}

pub fn augment_with_rng<R: Rng>(g: &Graph, mode: Augmentation, rng: &mut R) -> Result<Graph> {
    let rate = mode.rate();
    if !(0.0..=1.0).contains(&rate) {
        return contract(format!("augmentation rate {rate} outside [0, 1]"));
    }
    match mode {
        Augmentation::AttributeMask(_) => {
            let f = g.feature_dim();
            let k = (rate * f as f64).floor() as usize;
            let mut feats = g.features().clone();
            if k > 0 {
                for r in 0..g.node_count() {
                    let row = feats.row_mut(r);
                    for c in sample(rng, f, k) {
                        row[c] = 0.0;
                    }
                }
            }
            g.with_parts(feats, g.edges().iter().copied())
        }
        Augmentation::EdgePerturb(_) => {
            let edges = perturb_edges(g, rate, rng)?;
            g.with_parts(g.features().clone(), edges)
        }
    }
}

fn perturb_edges<R: Rng>(g: &Graph, rate: f64, rng: &mut R) -> Result<Vec<(usize, usize)>> {
    let m = g.edge_count();
    let k = (rate * m as f64).floor() as usize;
    if k == 0 {
        return Ok(g.edges().to_vec());
    }
    let n = g.node_count();
    let capacity = n * (n - 1) / 2 - m;
    if k > capacity {
        return contract(format!(
            "cannot insert {k} new edges: only {capacity} absent pairs"
        ));
    }
    let removed: HashSet<usize> = sample(rng, m, k).into_iter().collect();
    let mut kept: Vec<(usize, usize)> = g
        .edges()
        .iter()
        .enumerate()
        .filter(|(i, _)| !removed.contains(i))
        .map(|(_, &e)| e)
        .collect();
    let mut added = HashSet::with_capacity(k);
    while added.len() < k {
        let u = rng.gen_range(0..n);
        let v = rng.gen_range(0..n);
        if u == v {
            continue;
        }
        let e = (u.min(v), u.max(v));
        if g.has_edge(e.0, e.1) || !added.insert(e) {
            continue;
        }
        kept.push(e);
    }
    Ok(kept)
}
