//! Checks shared by the invariant tests and the acceptance suite.

use std::collections::BTreeSet;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use segnn::datagen::{gen_ba_shapes, gen_syn_cora, BaShapesConfig, SynCoraConfig};
use segnn::encoder::{encode_nodes, EncoderParams};
use segnn::explain::{explain_all, k_nearest_labeled};
use segnn::graph::{normalize_adjacency, SubgraphIndex};
use segnn::io::save_dataset;
use segnn::similarity::Scorer;
use segnn::training::{train, TrainConfig};

use super::oracles::retrieval_case;

pub fn check_weights(seed: u64) -> Result<(), String> {
    let case = retrieval_case(seed);
    let g = &case.graph;
    let labeled = g.train_nodes();
    if labeled.len() < 2 {
        return Ok(());
    }
    let scorer = Scorer::new(g, &case.index, &case.h, case.lambda).unwrap();
    let targets: Vec<usize> = (0..g.node_count()).collect();
    let k = 1 + (seed as usize % 5);
    let tau = [0.1, 1.0, 3.0][seed as usize % 3];
    let all = explain_all(&scorer, &targets, &labeled, k, tau, g.num_classes()).map_err(|e| e.to_string())?;
    for e in all {
        let w: f64 = e.prediction.weights.iter().sum();
        let d: f64 = e.prediction.distribution.iter().sum();
        if (w - 1.0).abs() > 1e-9 || (d - 1.0).abs() > 1e-9 {
            return Err(format!("seed {seed} target {}: weights {w}, distribution {d}", e.target));
        }
    }
    Ok(())
}

pub fn check_fusion(seed: u64) -> Result<(), String> {
    let case = retrieval_case(seed);
    let g = &case.graph;
    let scorer = Scorer::new(g, &case.index, &case.h, case.lambda).unwrap();
    let all: Vec<usize> = (0..g.node_count()).collect();
    for t in 0..g.node_count() {
        for p in scorer.score_against(t, &all) {
            let s = p.score;
            let want = s.lambda * s.node_sim + (1.0 - s.lambda) * s.struct_sim;
            if s.overall != want || s.lambda != case.lambda {
                return Err(format!("seed {seed} pair ({t}, {}): {s:?}", p.candidate));
            }
        }
    }
    Ok(())
}

/// Every test motif node with a labeled zero-noise twin retrieves a twin
/// first, at similarity 1.
pub fn check_twin_first(seed: u64) -> Result<usize, String> {
    let src = super::cora_like(seed);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (g, gt) = gen_syn_cora(&src, &SynCoraConfig::zero_noise(), &mut rng).map_err(|e| e.to_string())?;
    let cfg = TrainConfig::default();
    let params = EncoderParams::init(g.feature_dim(), cfg.hidden, seed).unwrap();
    let emb = encode_nodes(&g, &normalize_adjacency(&g), &params).unwrap();
    let index = SubgraphIndex::build(&g, cfg.hop, 0).unwrap();
    let scorer = Scorer::new(&g, &index, &emb.h, cfg.lambda).unwrap();
    let labeled = g.train_nodes();
    let labeled_set: BTreeSet<usize> = labeled.iter().copied().collect();
    let group = gt.group_of();
    let mut checked = 0;
    for t in g.test_nodes() {
        let Some(&gi) = group.get(&t) else { continue };
        let twins: BTreeSet<usize> = gt.twin_groups[gi]
            .iter()
            .copied()
            .filter(|v| *v != t && labeled_set.contains(v))
            .collect();
        if twins.is_empty() {
            continue;
        }
        let top = &k_nearest_labeled(&scorer, t, &labeled, 1).map_err(|e| e.to_string())?.neighbors[0];
        if !twins.contains(&top.id) || (top.score.overall - 1.0).abs() > 1e-12 {
            return Err(format!("seed {seed} target {t}: top {} score {}", top.id, top.score.overall));
        }
        checked += 1;
    }
    if checked == 0 {
        return Err(format!("seed {seed}: no test node has a labeled twin"));
    }
    Ok(checked)
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}

/// Generation and a short training run, each twice from the same seed.
pub fn check_determinism(seed: u64) -> Result<(), String> {
    let tmp = tempfile::tempdir().unwrap();
    let gen_ba = |name: &str| {
        let dir = tmp.path().join(name);
        let (g, gt) = gen_ba_shapes(&BaShapesConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        save_dataset(&g, &dir).unwrap();
        gt.save(&dir).unwrap();
        dir_bytes(&dir)
    };
    if gen_ba("ba1") != gen_ba("ba2") {
        return Err(format!("seed {seed}: BA-Shapes generation differs"));
    }
    let src = super::cora_like(seed);
    let gen_syn = |name: &str| {
        let dir = tmp.path().join(name);
        let (g, gt) = gen_syn_cora(&src, &SynCoraConfig::default(), &mut ChaCha8Rng::seed_from_u64(seed)).unwrap();
        save_dataset(&g, &dir).unwrap();
        gt.save(&dir).unwrap();
        dir_bytes(&dir)
    };
    if gen_syn("syn1") != gen_syn("syn2") {
        return Err(format!("seed {seed}: Syn-Cora generation differs"));
    }
    let g = super::blob_graph(40, 6, seed);
    let cfg = TrainConfig {
        k: 3,
        hidden: 8,
        max_epochs: 4,
        batch_nodes: 16,
        batch_edges: 16,
        q_n: 8,
        q_e: 8,
        seed,
        ..TrainConfig::default()
    };
    let a = train(&g, &cfg).map_err(|e| e.to_string())?;
    let b = train(&g, &cfg).map_err(|e| e.to_string())?;
    if a.params.to_bytes() != b.params.to_bytes() {
        return Err(format!("seed {seed}: model bytes differ"));
    }
    let strip = |csv: String| -> Vec<String> {
        csv.lines().map(|l| l.rsplit_once(',').map_or(l, |(head, _)| head).to_string()).collect()
    };
    if strip(a.log.to_csv()) != strip(b.log.to_csv()) {
        return Err(format!("seed {seed}: training logs differ"));
    }
    Ok(())
}
