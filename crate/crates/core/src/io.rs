//! On-disk dataset directories: `nodes.tsv`, `edges.tsv`, `features.csv`.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::graph::{Graph, Split};
use crate::tensor::Tensor;

pub const NODES_FILE: &str = "nodes.tsv";
pub const EDGES_FILE: &str = "edges.tsv";
pub const FEATURES_FILE: &str = "features.csv";

fn parse_err(path: &Path, line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        path: path.to_path_buf(),
        line,
        msg: msg.into(),
    }
}

fn content_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim_end_matches('\r')))
        .filter(|(_, l)| !l.trim().is_empty())
}

/// Loads a dataset directory. With `strict`, isolated nodes are rejected.
pub fn load_dataset(dir: impl AsRef<Path>, strict: bool) -> Result<Graph> {
    let dir = dir.as_ref();
    let nodes_path = dir.join(NODES_FILE);
    let nodes_text = fs::read_to_string(&nodes_path)?;
    let mut rows: Vec<(usize, Option<usize>, Split)> = Vec::new();
    for (line, text) in content_lines(&nodes_text) {
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 3 {
            return Err(parse_err(&nodes_path, line, "expected id<TAB>label<TAB>split"));
        }
        let id = fields[0]
            .trim()
            .parse::<usize>()
            .map_err(|e| parse_err(&nodes_path, line, format!("bad node id: {e}")))?;
        let label = match fields[1].trim() {
            "-" => None,
            s => Some(
                s.parse::<usize>()
                    .map_err(|e| parse_err(&nodes_path, line, format!("bad label: {e}")))?,
            ),
        };
        let split = Split::parse(fields[2].trim())
            .ok_or_else(|| parse_err(&nodes_path, line, format!("unknown split {:?}", fields[2])))?;
        rows.push((id, label, split));
    }
    let n = rows.len();
    let mut labels = vec![None; n];
    let mut splits = vec![Split::None; n];
    let mut seen = vec![false; n];
    for &(id, label, split) in &rows {
        if id >= n || seen[id] {
            return Err(Error::Validation(format!(
                "{}: node ids must be exactly 0..{n}, found {id} out of range or repeated",
                nodes_path.display()
            )));
        }
        seen[id] = true;
        labels[id] = label;
        splits[id] = split;
    }

    let edges_path = dir.join(EDGES_FILE);
    let edges_text = fs::read_to_string(&edges_path)?;
    let mut edges = Vec::new();
    for (line, text) in content_lines(&edges_text) {
        let fields: Vec<&str> = text.split('\t').collect();
        if fields.len() != 2 {
            return Err(parse_err(&edges_path, line, "expected src<TAB>dst"));
        }
        let parse = |s: &str| {
            s.trim()
                .parse::<usize>()
                .map_err(|e| parse_err(&edges_path, line, format!("bad endpoint: {e}")))
        };
        let (u, v) = (parse(fields[0])?, parse(fields[1])?);
        if u == v {
            return Err(parse_err(&edges_path, line, "self-loop"));
        }
        if u >= n || v >= n {
            return Err(Error::Validation(format!(
                "{}:{line}: endpoint outside 0..{n}",
                edges_path.display()
            )));
        }
        edges.push((u, v));
    }

    let feat_path = dir.join(FEATURES_FILE);
    let feat_text = fs::read_to_string(&feat_path)?;
    let mut data = Vec::new();
    let mut width = None;
    let mut count = 0;
    for (line, text) in content_lines(&feat_text) {
        let before = data.len();
        for field in text.split(',') {
            let v = field
                .trim()
                .parse::<f64>()
                .map_err(|e| parse_err(&feat_path, line, format!("bad value: {e}")))?;
            if !v.is_finite() {
                return Err(parse_err(&feat_path, line, "non-finite feature"));
            }
            data.push(v);
        }
        let w = data.len() - before;
        if *width.get_or_insert(w) != w {
            return Err(parse_err(&feat_path, line, "row width differs from first row"));
        }
        count += 1;
    }
    if count != n {
        return Err(Error::Validation(format!(
            "{} has {count} rows for {n} nodes",
            feat_path.display()
        )));
    }
    let features = Tensor::from_vec(n, width.unwrap_or(0), data)?;
    let g = Graph::new(features, edges, labels, splits)?;
    if strict {
        let iso = g.isolated_nodes();
        if !iso.is_empty() {
            return Err(Error::Validation(format!(
                "{} isolated nodes (first: {})",
                iso.len(),
                iso[0]
            )));
        }
    }
    Ok(g)
}

/// Writes `g` in the dataset directory format, creating `dir` if needed.
pub fn save_dataset(g: &Graph, dir: impl AsRef<Path>) -> Result<PathBuf> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir)?;
    let mut nodes = String::new();
    for v in 0..g.node_count() {
        let label = g.label(v).map_or_else(|| "-".to_string(), |l| l.to_string());
        let _ = writeln!(nodes, "{v}\t{label}\t{}", g.splits()[v].as_str());
    }
    fs::write(dir.join(NODES_FILE), nodes)?;
    let mut edges = String::new();
    for &(u, v) in g.edges() {
        let _ = writeln!(edges, "{u}\t{v}");
    }
    fs::write(dir.join(EDGES_FILE), edges)?;
    let mut feats = String::new();
    for r in 0..g.node_count() {
        for (i, x) in g.features().row(r).iter().enumerate() {
            if i > 0 {
                feats.push(',');
            }
            let _ = write!(feats, "{x}");
        }
        feats.push('\n');
    }
    fs::write(dir.join(FEATURES_FILE), feats)?;
    Ok(dir.to_path_buf())
}
