//! Flat `key = value` run configuration.
//!
//! Plain keys belong to the run options or the training config. Keys under
//! `ba.`, `syn.` and `baseline.` configure the generators and the gcn_k
//! baseline. Comma-separated values become lists.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use segnn::datagen::{BaShapesConfig, SynCoraConfig};
use segnn::eval::BaselineConfig;
use segnn::training::TrainConfig;

pub const RESOLVED_CONFIG_FILE: &str = "config.txt";

const STRING_KEYS: &[&str] = &["data", "out", "source"];

const LIST_KEYS: &[&str] = &[
    "seeds",
    "metrics",
    "robustness_rates",
    "syn.mask_rates",
    "syn.rewire_rates",
];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunOptions {
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Cora directory used as the Syn-Cora source.
    pub source: Option<PathBuf>,
    pub seeds: Vec<u64>,
    pub metrics: Vec<String>,
    pub robustness_rates: Vec<f64>,
    /// Subgraph edge cap at evaluation time; unset reuses the training cap.
    pub eval_max_subgraph_edges: Option<usize>,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            data: None,
            out: None,
            source: None,
            seeds: vec![0],
            metrics: vec!["accuracy".into(), "precision".into()],
            robustness_rates: vec![0.0, 0.05, 0.1, 0.15, 0.2, 0.25],
            eval_max_subgraph_edges: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct RunConfig {
    pub run: RunOptions,
    pub train: TrainConfig,
    pub ba: BaShapesConfig,
    pub syn: SynCoraConfig,
    pub baseline: BaselineConfig,
}

fn parse_scalar(raw: &str) -> Value {
    let raw = raw.trim();
    serde_json::from_str::<Value>(raw)
        .ok()
        .filter(|v| !v.is_object() && !v.is_array())
        .unwrap_or_else(|| Value::String(raw.to_string()))
}

fn parse_value(key: &str, raw: &str) -> Value {
    if STRING_KEYS.contains(&key) {
        Value::String(raw.trim().to_string())
    } else if LIST_KEYS.contains(&key) {
        let items = raw.split(',').map(str::trim).filter(|s| !s.is_empty());
        Value::Array(items.map(parse_scalar).collect())
    } else {
        parse_scalar(raw)
    }
}

fn field_names<T: Serialize + Default>() -> Vec<String> {
    match serde_json::to_value(T::default()) {
        Ok(Value::Object(m)) => m.keys().cloned().collect(),
        _ => Vec::new(),
    }
}

#[derive(Default)]
struct Sections {
    run: Map<String, Value>,
    train: Map<String, Value>,
    ba: Map<String, Value>,
    syn: Map<String, Value>,
    baseline: Map<String, Value>,
}

impl Sections {
    fn insert(&mut self, key: &str, value: Value) -> Result<()> {
        let (map, field) = if let Some(f) = key.strip_prefix("ba.") {
            (&mut self.ba, f)
        } else if let Some(f) = key.strip_prefix("syn.") {
            (&mut self.syn, f)
        } else if let Some(f) = key.strip_prefix("baseline.") {
            (&mut self.baseline, f)
        } else if field_names::<TrainConfig>().iter().any(|k| k == key) {
            (&mut self.train, key)
        } else if field_names::<RunOptions>().iter().any(|k| k == key) {
            (&mut self.run, key)
        } else {
            bail!("unknown config key `{key}`");
        };
        map.insert(field.to_string(), value);
        Ok(())
    }
}

fn build<T: DeserializeOwned>(section: &str, map: Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(map)).map_err(|e| anyhow!("invalid {section} setting: {e}"))
}

impl RunConfig {
    /// Parses config text, then applies `overrides` (each `key=value`).
    pub fn parse(text: &str, overrides: &[String]) -> Result<Self> {
        let mut sections = Sections::default();
        for (no, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| anyhow!("line {}: expected `key = value`", no + 1))?;
            let key = key.trim();
            sections
                .insert(key, parse_value(key, value))
                .with_context(|| format!("line {}", no + 1))?;
        }
        for item in overrides {
            let (key, value) = item
                .split_once('=')
                .ok_or_else(|| anyhow!("override `{item}` is not key=value"))?;
            let key = key.trim();
            sections.insert(key, parse_value(key, value))?;
        }
        let cfg = RunConfig {
            run: build("run", sections.run)?,
            train: build("training", sections.train)?,
            ba: build("ba", sections.ba)?,
            syn: build("syn", sections.syn)?,
            baseline: build("baseline", sections.baseline)?,
        };
        cfg.train.validate()?;
        if cfg.run.seeds.is_empty() {
            bail!("seeds must not be empty");
        }
        Ok(cfg)
    }

    pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Self> {
        let text = match path {
            Some(p) => std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?,
            None => String::new(),
        };
        Self::parse(&text, overrides)
    }

    /// Every key with its resolved value, in a form `parse` accepts.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        let mut section = |prefix: &str, v: Value| {
            let Value::Object(map) = v else { return };
            for (k, v) in map {
                let rendered = match v {
                    Value::Null => continue,
                    Value::Array(items) => items.iter().map(render).collect::<Vec<_>>().join(","),
                    other => render(&other),
                };
                let _ = writeln!(out, "{prefix}{k} = {rendered}");
            }
        };
        let json = |v: Result<Value, _>| v.expect("configs serialize");
        section("", json(serde_json::to_value(&self.run)));
        section("", json(serde_json::to_value(&self.train)));
        section("ba.", json(serde_json::to_value(&self.ba)));
        section("syn.", json(serde_json::to_value(&self.syn)));
        section("baseline.", json(serde_json::to_value(&self.baseline)));
        out
    }

    pub fn write_resolved(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join(RESOLVED_CONFIG_FILE), self.to_text())?;
        Ok(())
    }
}

fn render(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}
