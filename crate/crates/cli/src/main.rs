mod config;

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use segnn::augment::{augment, Augmentation};
use segnn::datagen::{gen_ba_shapes, gen_syn_cora, GroundTruth, GROUND_TRUTH_FILE};
use segnn::encoder::{encode_nodes, EncoderParams};
use segnn::eval::{evaluate_model, robustness_csv, robustness_sweep, Metric, MetricsSummary};
use segnn::explain::{explain_all, to_dot, ExplanationRecord};
use segnn::graph::{normalize_adjacency, Graph, SubgraphIndex};
use segnn::io::{load_dataset, save_dataset};
use segnn::similarity::Scorer;
use segnn::training::{train, TrainConfig};

use config::{RunConfig, RESOLVED_CONFIG_FILE};

const MODEL_FILE: &str = "model.bin";
const TRAIN_LOG_FILE: &str = "train_log.csv";
const METRICS_FILE: &str = "metrics.json";
const EXPLANATIONS_FILE: &str = "explanations.json";
const ROBUSTNESS_FILE: &str = "robustness.csv";

#[derive(Parser)]
#[command(name = "segnn", version, about = "Self-explainable GNN node classification")]
struct Cli {
    /// Worker threads for parallel sections (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Extra `key=value` settings applied after the config file.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Overrides the training seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Clone, Copy, ValueEnum)]
enum Kind {
    BaShapes,
    SynCora,
}

#[derive(Clone, Copy, ValueEnum)]
enum PerturbMode {
    Edge,
    Mask,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic dataset with ground truth.
    Generate {
        kind: Kind,
        #[arg(long)]
        out: PathBuf,
        /// Cora dataset directory (syn-cora only).
        #[arg(long)]
        source: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Train an encoder.
    Train {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Emit explanations for target nodes.
    Explain {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated node ids.
        #[arg(long, value_delimiter = ',', conflicts_with = "all_test")]
        targets: Vec<usize>,
        #[arg(long)]
        all_test: bool,
        /// Also write one DOT file per target.
        #[arg(long)]
        dot: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Compute metrics; without --model, trains one model per configured seed.
    Evaluate {
        #[arg(long)]
        model: Option<PathBuf>,
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Comma-separated: accuracy, precision, edge_acc, auc.
        #[arg(long, value_delimiter = ',')]
        metrics: Vec<String>,
        /// Run the edge-noise sweep instead (rates from `robustness_rates`).
        #[arg(long)]
        robustness: bool,
        #[command(flatten)]
        common: Common,
    },
    /// Apply an augmentation to a dataset directory.
    Perturb {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        rate: f64,
        #[arg(long, value_enum, default_value = "edge")]
        mode: PerturbMode,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Keep only the largest connected component.
    Lcc {
        #[arg(long)]
        data: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn resolve(common: &Common, extra: &[String]) -> Result<RunConfig> {
    let mut overrides = common.set.clone();
    overrides.extend_from_slice(extra);
    if let Some(seed) = common.seed {
        overrides.push(format!("seed={seed}"));
    }
    RunConfig::load(common.config.as_deref(), &overrides)
}

fn load(dir: &Path) -> Result<Graph> {
    load_dataset(dir, false).with_context(|| format!("loading dataset {}", dir.display()))
}

fn load_ground_truth(dir: &Path) -> Result<GroundTruth> {
    let path = dir.join(GROUND_TRUTH_FILE);
    if !path.exists() {
        bail!("{} not found; edge_acc and auc need ground truth", path.display());
    }
    Ok(GroundTruth::load(dir)?)
}

fn class_histogram(g: &Graph) -> BTreeMap<usize, usize> {
    let mut h = BTreeMap::new();
    for l in g.labels().iter().flatten() {
        *h.entry(*l).or_insert(0) += 1;
    }
    h
}

fn summarize(g: &Graph) {
    println!(
        "nodes {} edges {} features {} classes {:?}",
        g.node_count(),
        g.edge_count(),
        g.feature_dim(),
        class_histogram(g)
    );
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    fs::write(path, serde_json::to_string_pretty(value)? + "\n")?;
    Ok(())
}

fn cmd_generate(kind: Kind, out: &Path, source: Option<PathBuf>, common: &Common) -> Result<()> {
    let cfg = resolve(common, &[])?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.train.seed);
    let (g, gt) = match kind {
        Kind::BaShapes => gen_ba_shapes(&cfg.ba, &mut rng)?,
        Kind::SynCora => {
            let src = source
                .or_else(|| cfg.run.source.clone())
                .ok_or_else(|| anyhow!("syn-cora needs --source pointing at a Cora dataset"))?;
            gen_syn_cora(&load(&src)?, &cfg.syn, &mut rng)?
        }
    };
    save_dataset(&g, out)?;
    gt.save(out)?;
    cfg.write_resolved(out)?;
    summarize(&g);
    Ok(())
}

fn cmd_train(data: &Path, out: &Path, common: &Common) -> Result<()> {
    let cfg = resolve(common, &[])?;
    let g = load(data)?;
    cfg.write_resolved(out)?;
    let outcome = train(&g, &cfg.train)?;
    outcome.params.save(out.join(MODEL_FILE))?;
    fs::write(out.join(TRAIN_LOG_FILE), outcome.log.to_csv())?;
    println!(
        "best epoch {} val accuracy {:.4} ({} epochs)",
        outcome.log.best_epoch,
        outcome.log.best_val_acc,
        outcome.log.epochs.len()
    );
    Ok(())
}

/// Uses the config stored beside the model unless one is given.
fn resolve_for_model(model: &Path, common: &Common) -> Result<RunConfig> {
    let beside = model.parent().map(|d| d.join(RESOLVED_CONFIG_FILE));
    match (&common.config, beside) {
        (None, Some(p)) if p.exists() => {
            let with_file = Common {
                config: Some(p),
                ..common.clone()
            };
            resolve(&with_file, &[])
        }
        _ => resolve(common, &[]),
    }
}

fn load_model(path: &Path, g: &Graph) -> Result<EncoderParams> {
    let params = EncoderParams::load(path).with_context(|| format!("loading model {}", path.display()))?;
    if params.in_dim() != g.feature_dim() {
        bail!(
            "model expects {} features but the dataset has {}",
            params.in_dim(),
            g.feature_dim()
        );
    }
    Ok(params)
}

fn eval_config(cfg: &RunConfig) -> TrainConfig {
    let mut t = cfg.train.clone();
    if let Some(cap) = cfg.run.eval_max_subgraph_edges {
        t.max_subgraph_edges = cap;
    }
    t
}

struct ExplainArgs<'a> {
    model: &'a Path,
    data: &'a Path,
    out: &'a Path,
    targets: &'a [usize],
    all_test: bool,
    dot: bool,
}

fn cmd_explain(a: ExplainArgs, common: &Common) -> Result<()> {
    let cfg = resolve_for_model(a.model, common)?;
    let g = load(a.data)?;
    let params = load_model(a.model, &g)?;
    let targets = if a.all_test { g.test_nodes() } else { a.targets.to_vec() };
    if targets.is_empty() {
        bail!("no targets: pass --targets or --all-test");
    }
    if let Some(bad) = targets.iter().find(|&&t| t >= g.node_count()) {
        bail!("unknown target {bad}; valid ids are 0..{}", g.node_count());
    }
    let t = eval_config(&cfg);
    let emb = encode_nodes(&g, &normalize_adjacency(&g), &params)?;
    let index = SubgraphIndex::build(&g, t.hop, t.max_subgraph_edges)?;
    let scorer = Scorer::new(&g, &index, &emb.h, t.lambda)?;
    let explanations = explain_all(&scorer, &targets, &g.train_nodes(), t.k, t.tau, g.num_classes())?;
    let records: Vec<ExplanationRecord> = explanations.iter().map(ExplanationRecord::from).collect();
    for r in &records {
        let total: f64 = r.neighbors.iter().map(|n| n.weight).sum();
        if (total - 1.0).abs() > 1e-9 {
            bail!("neighbor weights of target {} sum to {total}", r.target);
        }
    }
    fs::create_dir_all(a.out)?;
    cfg.write_resolved(a.out)?;
    write_json(&a.out.join(EXPLANATIONS_FILE), &records)?;
    if a.dot {
        for e in &explanations {
            fs::write(a.out.join(format!("target_{}.dot", e.target)), to_dot(e, &scorer))?;
        }
    }
    println!("{} explanations written to {}", records.len(), a.out.display());
    Ok(())
}

fn parse_metrics(names: &[String]) -> Result<Vec<Metric>> {
    let mut metrics = vec![Metric::Accuracy];
    for n in names {
        let m = Metric::parse(n.trim()).ok_or_else(|| anyhow!("unknown metric `{n}`"))?;
        if !metrics.contains(&m) {
            metrics.push(m);
        }
    }
    Ok(metrics)
}

fn cmd_evaluate(
    model: Option<&Path>,
    data: &Path,
    out: &Path,
    metric_names: &[String],
    robustness: bool,
    common: &Common,
) -> Result<()> {
    let cfg = match model {
        Some(m) => resolve_for_model(m, common)?,
        None => resolve(common, &[])?,
    };
    let g = load(data)?;
    fs::create_dir_all(out)?;
    cfg.write_resolved(out)?;
    if robustness {
        let rows = robustness_sweep(&g, &cfg.train, &cfg.baseline, &cfg.run.robustness_rates, &cfg.run.seeds)?;
        fs::write(out.join(ROBUSTNESS_FILE), robustness_csv(&rows))?;
        println!("{} sweep rows written to {}", rows.len(), out.join(ROBUSTNESS_FILE).display());
        return Ok(());
    }
    let names = if metric_names.is_empty() { &cfg.run.metrics } else { metric_names };
    let metrics = parse_metrics(names)?;
    let gt = if metrics.iter().any(|m| m.needs_ground_truth()) {
        Some(load_ground_truth(data)?)
    } else {
        None
    };
    let eval_cfg = eval_config(&cfg);
    let (seeds, runs) = match model {
        Some(m) => {
            let params = load_model(m, &g)?;
            let report = evaluate_model(&g, &params, &eval_cfg, gt.as_ref(), &metrics)?;
            (vec![cfg.train.seed], vec![report])
        }
        None => {
            let mut runs = Vec::new();
            for &seed in &cfg.run.seeds {
                let train_cfg = TrainConfig { seed, ..cfg.train.clone() };
                let outcome = train(&g, &train_cfg)?;
                let report = evaluate_model(
                    &g,
                    &outcome.params,
                    &TrainConfig { seed, ..eval_cfg.clone() },
                    gt.as_ref(),
                    &metrics,
                )?;
                info!("seed {seed}: {report:?}");
                runs.push(report);
            }
            (cfg.run.seeds.clone(), runs)
        }
    };
    let summary = MetricsSummary::new(seeds, runs)?;
    write_json(&out.join(METRICS_FILE), &summary)?;
    println!("{}", serde_json::to_string(&summary.mean)?);
    Ok(())
}

fn cmd_perturb(data: &Path, out: &Path, rate: f64, mode: PerturbMode, seed: u64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        bail!("rate {rate} outside [0, 1]");
    }
    let g = load(data)?;
    let aug = match mode {
        PerturbMode::Edge => Augmentation::EdgePerturb(rate),
        PerturbMode::Mask => Augmentation::AttributeMask(rate),
    };
    let noisy = augment(&g, aug, seed)?;
    save_dataset(&noisy, out)?;
    summarize(&noisy);
    Ok(())
}

fn cmd_lcc(data: &Path, out: &Path) -> Result<()> {
    let g = load(data)?;
    let (lcc, kept) = g.largest_connected_component()?;
    save_dataset(&lcc, out)?;
    println!("kept {} of {} nodes", kept.len(), g.node_count());
    summarize(&lcc);
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("configuring the thread pool")?;
    }
    match &cli.command {
        Command::Generate {
            kind,
            out,
            source,
            common,
        } => cmd_generate(*kind, out, source.clone(), common),
        Command::Train { data, out, common } => cmd_train(data, out, common),
        Command::Explain {
            model,
            data,
            out,
            targets,
            all_test,
            dot,
            common,
        } => cmd_explain(
            ExplainArgs {
                model,
                data,
                out,
                targets,
                all_test: *all_test,
                dot: *dot,
            },
            common,
        ),
        Command::Evaluate {
            model,
            data,
            out,
            metrics,
            robustness,
            common,
        } => cmd_evaluate(model.as_deref(), data, out, metrics, *robustness, common),
        Command::Perturb {
            data,
            out,
            rate,
            mode,
            seed,
        } => cmd_perturb(data, out, *rate, *mode, *seed),
        Command::Lcc { data, out } => cmd_lcc(data, out),
    }
}

/// 2 for numerical failure, 1 for everything else.
fn exit_code(err: &anyhow::Error) -> u8 {
    let numeric = err.chain().any(|e| {
        matches!(
            e.downcast_ref::<segnn::Error>(),
            Some(segnn::Error::Divergence { .. } | segnn::Error::NonFinite { .. })
        )
    });
    if numeric {
        2
    } else {
        1
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            for cause in e.chain() {
                if let Some(segnn::Error::Divergence { epoch, .. }) = cause.downcast_ref::<segnn::Error>() {
                    eprintln!("last finite epoch: {}", epoch.saturating_sub(1));
                }
            }
            ExitCode::from(exit_code(&e))
        }
    }
}
