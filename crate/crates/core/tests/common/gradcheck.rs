//! Central finite differences against the tape's reverse pass.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use segnn::autodiff::{PairDotSpec, Segments, Tape, Var};
use segnn::encoder::EncoderParams;
use segnn::graph::{normalize_adjacency, SubgraphIndex};
use segnn::tensor::{xavier_init, Tensor};
use segnn::training::{draw_objective, evaluate_objective, ClassIndex, TrainConfig};

const STEP: f64 = 1e-6;

type Build = Box<dyn Fn(&mut Tape, &[Var]) -> segnn::Result<Var>>;

/// Entries in `lo..hi` with a random sign, so relu never sits on its kink.
fn away_from_zero(rows: usize, cols: usize, lo: f64, hi: f64, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols)
        .map(|_| {
            let m = rng.gen_range(lo..hi);
            if rng.gen_bool(0.5) { m } else { -m }
        })
        .collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

fn positive(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Tensor {
    let data = (0..rows * cols).map(|_| rng.gen_range(0.2..2.0)).collect();
    Tensor::from_vec(rows, cols, data).unwrap()
}

/// Scalar probe `sum(out * w)` with a fixed random `w`.
fn probe(inputs: &[Tensor], build: &Build, w_seed: u64) -> (f64, Vec<Tensor>) {
    let mut tape = Tape::new();
    let vars: Vec<Var> = inputs.iter().map(|t| tape.param(t.clone())).collect();
    let out = build(&mut tape, &vars).unwrap();
    let shape = tape.value(out).shape();
    let mut rng = ChaCha8Rng::seed_from_u64(w_seed);
    let w = away_from_zero(shape.0, shape.1, 0.5, 1.5, &mut rng);
    let w = tape.constant(w);
    let prod = tape.mul(out, w).unwrap();
    let loss = tape.sum(prod).unwrap();
    let value = tape.value(loss).data()[0];
    let grads = tape.backward(loss).unwrap();
    (value, vars.iter().map(|&v| grads.wrt(v)).collect())
}

/// Norm-wise relative error `|a - n| / max(|a|, |n|)` over all inputs.
fn check(inputs: Vec<Tensor>, build: Build) -> f64 {
    let (_, analytic) = probe(&inputs, &build, 99);
    let mut worst: f64 = 0.0;
    for (i, x) in inputs.iter().enumerate() {
        let mut diff = 0.0;
        let mut na = 0.0;
        let mut nn = 0.0;
        for k in 0..x.len() {
            let shifted = |delta: f64| {
                let mut moved = inputs.clone();
                moved[i].data_mut()[k] += delta;
                probe(&moved, &build, 99).0
            };
            let numeric = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            let a = analytic[i].data()[k];
            diff += (a - numeric).powi(2);
            na += a * a;
            nn += numeric * numeric;
        }
        let scale = na.sqrt().max(nn.sqrt());
        if scale > 0.0 {
            worst = worst.max(diff.sqrt() / scale);
        }
    }
    worst
}

/// Worst relative error of every differentiable primitive.
pub fn primitive_errors() -> Vec<(&'static str, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut r = |rows, cols| away_from_zero(rows, cols, 0.1, 1.0, &mut rng);
    let (a, b, row, c, sq) = (r(3, 4), r(4, 2), r(1, 4), r(3, 4), r(4, 4));
    let (h, h2, col) = (r(5, 3), r(4, 3), r(6, 1));
    let mut prng = ChaCha8Rng::seed_from_u64(7);
    let pos = positive(3, 2, &mut prng);
    let g = crate::common::blob_graph(8, 2, 3);
    let adj = normalize_adjacency(&g).matrix().clone();
    let feats = r(8, 3);
    let mut spec = PairDotSpec::default();
    for (i, j, wt, s) in [(0, 1, 1.0, 0), (2, 3, 0.5, 0), (4, 0, -2.0, 1), (1, 1, 1.5, 2)] {
        spec.push(i, j, wt, s);
    }
    spec.out_len = 3;
    let spec = Arc::new(spec);
    let seg = Arc::new(Segments {
        group: vec![0, 0, 1, 2, 2, 2],
        n_groups: 3,
    });
    let idx = Arc::new(vec![2, 0, 2, 4]);
    let targets = Arc::new(vec![(0, 1), (2, 0), (4, 2)]);

    let cases: Vec<(&'static str, Vec<Tensor>, Build)> = vec![
        ("matmul", vec![a.clone(), b], Box::new(|t, v| t.matmul(v[0], v[1]))),
        ("sparse_matmul", vec![feats], Box::new(move |t, v| t.sparse_matmul(adj.clone(), v[0]))),
        ("add", vec![a.clone(), c.clone()], Box::new(|t, v| t.add(v[0], v[1]))),
        ("add_row_broadcast", vec![a.clone(), row.clone()], Box::new(|t, v| t.add(v[0], v[1]))),
        ("sub", vec![a.clone(), row], Box::new(|t, v| t.sub(v[0], v[1]))),
        ("mul", vec![a.clone(), c], Box::new(|t, v| t.mul(v[0], v[1]))),
        ("scalar_mul", vec![a.clone()], Box::new(|t, v| t.scalar_mul(v[0], -1.7))),
        ("relu", vec![a.clone()], Box::new(|t, v| t.relu(v[0]))),
        ("row_l2_normalize", vec![sq], Box::new(|t, v| t.row_l2_normalize(v[0]))),
        ("exp", vec![a.clone()], Box::new(|t, v| t.exp(v[0]))),
        ("log", vec![pos], Box::new(|t, v| t.log(v[0]))),
        ("sum", vec![a.clone()], Box::new(|t, v| t.sum(v[0]))),
        ("mean", vec![a], Box::new(|t, v| t.mean(v[0]))),
        ("gather_rows", vec![h.clone()], Box::new(move |t, v| t.gather_rows(v[0], idx.clone()))),
        ("pair_dot", vec![h.clone(), h2], Box::new(move |t, v| t.pair_dot(v[0], v[1], spec.clone()))),
        ("segment_logsumexp", vec![col], Box::new(move |t, v| t.segment_logsumexp(v[0], seg.clone()))),
        (
            "softmax_cross_entropy",
            vec![h],
            Box::new(move |t, v| t.softmax_cross_entropy(v[0], targets.clone())),
        ),
    ];
    cases.into_iter().map(|(name, inputs, build)| (name, check(inputs, build))).collect()
}

/// Worst elementwise relative error of the full objective's gradient on a
/// 10-node graph with both self-supervised terms active.
pub fn objective_error() -> f64 {
    let g = crate::common::blob_graph(10, 4, 7);
    let cfg = TrainConfig {
        k: 2,
        n_support: 2,
        q_neg: 3,
        hidden: 5,
        alpha: 0.5,
        beta: 0.5,
        q_n: 4,
        q_e: 4,
        batch_nodes: 6,
        batch_edges: 6,
        ..TrainConfig::default()
    };
    let index = SubgraphIndex::build(&g, cfg.hop, 0).unwrap();
    let classes = ClassIndex::new(&g, &g.train_nodes()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let draw = draw_objective(&g, &classes, &g.train_nodes(), &cfg, &mut rng).unwrap();
    // Nonzero biases keep pre-activations off the relu kink at exactly 0.
    let mut params = EncoderParams::init(g.feature_dim(), cfg.hidden, 5).unwrap();
    params.mlp_b1.value = xavier_init(1, cfg.hidden, 8).unwrap();
    params.mlp_b2.value = xavier_init(1, cfg.hidden, 9).unwrap();
    let eval = evaluate_objective(&g, &index, &params, &draw, &cfg).unwrap();
    assert!(eval.l_n > 0.0 && eval.l_e > 0.0);
    let mut worst: f64 = 0.0;
    for pi in 0..5 {
        for k in 0..params.params()[pi].value.len() {
            let shifted = |delta: f64| {
                let mut p = params.clone();
                p.params_mut()[pi].value.data_mut()[k] += delta;
                evaluate_objective(&g, &index, &p, &draw, &cfg).unwrap().total
            };
            let numeric = (shifted(STEP) - shifted(-STEP)) / (2.0 * STEP);
            let analytic = eval.grads[pi].data()[k];
            let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}
