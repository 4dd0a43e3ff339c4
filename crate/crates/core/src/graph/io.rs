//! Dataset directory format.
//!
//! ```text
//! edges.tsv       u<TAB>v per undirected edge (0-based)
//! features.tsv    N lines of d tab-separated reals
//! features.f32le  optional binary alternative: u32 N, u32 d, then N·d f32 (little endian)
//! labels.tsv      N lines, one integer class each
//! splits.json     optional {"train":[..],"val":[..],"test":[..]}
//! meta.json       optional {"name":str,"num_classes":int,"directed":bool}
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::{adjacency_from_edges, edge_list, make_split, Graph, SplitMasks};
use crate::error::{Result, SfrError};
use crate::numeric::DenseMatrix;

pub const SPLITS_FILE: &str = "splits.json";
const EDGES_FILE: &str = "edges.tsv";
const FEATURES_FILE: &str = "features.tsv";
const FEATURES_BIN: &str = "features.f32le";
const LABELS_FILE: &str = "labels.tsv";
const META_FILE: &str = "meta.json";

/// Seed of the split drawn when a dataset ships without `splits.json`.
const DEFAULT_SPLIT_SEED: u64 = 0;

#[derive(Debug, Default, Serialize, Deserialize)]
struct Meta {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    name: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    num_classes: Option<usize>,
    /// Edge lines are arcs; every arc must appear in both orientations.
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    directed: bool,
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitFile {
    train: Vec<usize>,
    val: Vec<usize>,
    test: Vec<usize>,
}

fn read(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(SfrError::format(path, "file not found"));
    }
    fs::read_to_string(path).map_err(|e| SfrError::io(path, e))
}

/// Non-empty, non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'))
}

fn parse_labels(path: &Path) -> Result<Vec<i64>> {
    let text = read(path)?;
    data_lines(&text)
        .map(|(ln, l)| {
            l.parse::<i64>().map_err(|_| {
                SfrError::format(path, format!("line {ln}: '{l}' is not an integer label"))
            })
        })
        .collect()
}

fn parse_features_tsv(path: &Path) -> Result<DenseMatrix<f64>> {
    let text = read(path)?;
    let mut data = Vec::new();
    let mut dim = None;
    let mut rows = 0;
    for (ln, l) in data_lines(&text) {
        let before = data.len();
        for tok in l.split_whitespace() {
            let v: f64 = tok.parse().map_err(|_| {
                SfrError::format(path, format!("line {ln}: '{tok}' is not a number"))
            })?;
            if !v.is_finite() {
                return Err(SfrError::format(
                    path,
                    format!("line {ln}: non-finite value"),
                ));
            }
            data.push(v);
        }
        let width = data.len() - before;
        match dim {
            None => dim = Some(width),
            Some(d) if d != width => {
                return Err(SfrError::format(
                    path,
                    format!("line {ln}: {width} columns, expected {d}"),
                ));
            }
            _ => {}
        }
        rows += 1;
    }
    DenseMatrix::from_vec(rows, dim.unwrap_or(0), data)
}

fn parse_features_bin(path: &Path) -> Result<DenseMatrix<f64>> {
    let bytes = fs::read(path).map_err(|e| SfrError::io(path, e))?;
    if bytes.len() < 8 {
        return Err(SfrError::format(path, "missing 8-byte header"));
    }
    let n = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
    let d = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    let body = &bytes[8..];
    if body.len() != n * d * 4 {
        return Err(SfrError::format(
            path,
            format!("header says {n}x{d} but body holds {} bytes", body.len()),
        ));
    }
    let data: Vec<f64> = body
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    if data.iter().any(|v| !v.is_finite()) {
        return Err(SfrError::format(path, "non-finite value"));
    }
    DenseMatrix::from_vec(n, d, data)
}

fn parse_edges(path: &Path, n: usize) -> Result<Vec<(usize, usize)>> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (ln, l) in data_lines(&text) {
        let mut it = l.split_whitespace();
        let (Some(a), Some(b), None) = (it.next(), it.next(), it.next()) else {
            return Err(SfrError::format(
                path,
                format!("line {ln}: expected two node ids"),
            ));
        };
        let parse = |t: &str| {
            t.parse::<usize>()
                .map_err(|_| SfrError::format(path, format!("line {ln}: '{t}' is not a node id")))
        };
        let (u, v) = (parse(a)?, parse(b)?);
        if u >= n || v >= n {
            return Err(SfrError::validation(format!(
                "{}: line {ln}: node id {} out of range for {n} nodes",
                path.display(),
                u.max(v)
            )));
        }
        if u == v {
            return Err(SfrError::validation(format!(
                "{}: line {ln}: self-loop on node {u}",
                path.display()
            )));
        }
        edges.push((u, v));
    }
    Ok(edges)
}

/// Loads a dataset directory.
pub fn load_graph(dir: impl AsRef<Path>) -> Result<Graph> {
    let dir = dir.as_ref();
    if !dir.is_dir() {
        return Err(SfrError::format(dir, "dataset directory not found"));
    }
    let meta: Meta = match fs::read_to_string(dir.join(META_FILE)) {
        Ok(text) => serde_json::from_str(&text)
            .map_err(|e| SfrError::format(dir.join(META_FILE), e.to_string()))?,
        Err(_) => Meta::default(),
    };

    let bin = dir.join(FEATURES_BIN);
    let features = if bin.exists() {
        parse_features_bin(&bin)?
    } else {
        parse_features_tsv(&dir.join(FEATURES_FILE))?
    };
    let n = features.rows();

    let labels_path = dir.join(LABELS_FILE);
    let raw_labels = parse_labels(&labels_path)?;
    if raw_labels.len() != n {
        return Err(SfrError::format(
            &labels_path,
            format!("{} labels but {n} feature rows", raw_labels.len()),
        ));
    }
    if let Some(bad) = raw_labels.iter().find(|&&y| y < 0) {
        return Err(SfrError::validation(format!("negative label {bad}")));
    }
    let labels: Vec<usize> = raw_labels.into_iter().map(|y| y as usize).collect();
    let inferred = labels.iter().max().map_or(0, |m| m + 1);
    let num_classes = meta.num_classes.unwrap_or(inferred);
    if let Some(&y) = labels.iter().find(|&&y| y >= num_classes) {
        return Err(SfrError::validation(format!(
            "label {y} out of range for {num_classes} classes"
        )));
    }

    let edges_path = dir.join(EDGES_FILE);
    let edges = parse_edges(&edges_path, n)?;
    if meta.directed {
        let set: std::collections::HashSet<(usize, usize)> = edges.iter().copied().collect();
        if let Some(&(u, v)) = edges.iter().find(|&&(u, v)| !set.contains(&(v, u))) {
            return Err(SfrError::validation(format!(
                "{}: directed input is not symmetric: arc {u}->{v} has no reverse",
                edges_path.display()
            )));
        }
    }
    let adjacency = adjacency_from_edges(n, &edges)?;

    let split_path = dir.join(SPLITS_FILE);
    let splits = if split_path.exists() {
        let s: SplitFile = serde_json::from_str(&read(&split_path)?)
            .map_err(|e| SfrError::format(&split_path, e.to_string()))?;
        SplitMasks::from_indices(n, &s.train, &s.val, &s.test)?
    } else {
        make_split(n, 0.1, 0.1, DEFAULT_SPLIT_SEED)?
    };

    let name = meta.name.unwrap_or_else(|| {
        dir.file_name()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default()
    });
    Graph::new(name, features, adjacency, labels, splits, num_classes)
}

fn write(path: PathBuf, contents: &[u8]) -> Result<()> {
    fs::write(&path, contents).map_err(|e| SfrError::io(path, e))
}

/// Writes the canonical text form: sorted `u < v` edges, shortest
/// round-tripping decimals, explicit splits and metadata.
pub fn write_graph(g: &Graph, dir: impl AsRef<Path>) -> Result<()> {
    use std::fmt::Write;
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| SfrError::io(dir, e))?;

    let mut edges = String::new();
    for (u, v) in edge_list(&g.adjacency) {
        writeln!(edges, "{u}\t{v}").unwrap();
    }
    write(dir.join(EDGES_FILE), edges.as_bytes())?;

    let mut feats = String::new();
    for i in 0..g.num_nodes() {
        let row = g.features.row(i);
        for (j, v) in row.iter().enumerate() {
            if j > 0 {
                feats.push('\t');
            }
            write!(feats, "{v}").unwrap();
        }
        feats.push('\n');
    }
    write(dir.join(FEATURES_FILE), feats.as_bytes())?;

    let mut labels = String::new();
    for y in &g.labels {
        writeln!(labels, "{y}").unwrap();
    }
    write(dir.join(LABELS_FILE), labels.as_bytes())?;

    let splits = SplitFile {
        train: g.splits.train_indices(),
        val: g.splits.val_indices(),
        test: g.splits.test_indices(),
    };
    let mut json = serde_json::to_string(&splits).expect("split serialization");
    json.push('\n');
    write(dir.join(SPLITS_FILE), json.as_bytes())?;

    let meta = Meta {
        name: Some(g.name.clone()),
        num_classes: Some(g.num_classes),
        directed: false,
    };
    let mut json = serde_json::to_string(&meta).expect("meta serialization");
    json.push('\n');
    write(dir.join(META_FILE), json.as_bytes())?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn put(dir: &Path, name: &str, text: &str) {
        fs::write(dir.join(name), text).unwrap();
    }

    fn toy_dir() -> tempfile::TempDir {
        let t = tempfile::tempdir().unwrap();
        put(t.path(), EDGES_FILE, "0\t1\n2 1\n1\t0\n");
        put(t.path(), FEATURES_FILE, "1\t0\n0.5\t2\n0\t-1.25\n");
        put(t.path(), LABELS_FILE, "0\n1\n1\n");
        t
    }

    #[test]
    fn loads_and_dedups() {
        let t = toy_dir();
        let g = load_graph(t.path()).unwrap();
        assert_eq!(g.num_nodes(), 3);
        assert_eq!(g.adjacency.nnz(), 4);
        assert_eq!(g.num_classes, 2);
        assert_eq!(g.features.get(2, 1), -1.25);
    }

    #[test]
    fn empty_edges_file() {
        let t = toy_dir();
        put(t.path(), EDGES_FILE, "");
        let g = load_graph(t.path()).unwrap();
        assert_eq!(g.adjacency.nnz(), 0);
    }

    #[test]
    fn error_kinds() {
        let t = toy_dir();
        fs::remove_file(t.path().join(LABELS_FILE)).unwrap();
        assert!(matches!(
            load_graph(t.path()),
            Err(SfrError::DatasetFormat { .. })
        ));

        let t = toy_dir();
        put(t.path(), EDGES_FILE, "0\t3\n");
        assert!(matches!(load_graph(t.path()), Err(SfrError::Validation(_))));

        let t = toy_dir();
        put(t.path(), EDGES_FILE, "1\t1\n");
        assert!(matches!(load_graph(t.path()), Err(SfrError::Validation(_))));

        let t = toy_dir();
        put(t.path(), META_FILE, r#"{"num_classes":1}"#);
        assert!(matches!(load_graph(t.path()), Err(SfrError::Validation(_))));

        let t = toy_dir();
        put(t.path(), META_FILE, r#"{"directed":true}"#);
        put(t.path(), EDGES_FILE, "0\t1\n1\t0\n1\t2\n");
        assert!(matches!(load_graph(t.path()), Err(SfrError::Validation(_))));
        put(t.path(), EDGES_FILE, "0\t1\n1\t0\n1\t2\n2\t1\n");
        assert_eq!(load_graph(t.path()).unwrap().num_edges(), 2);
    }

    #[test]
    fn binary_sidecar() {
        let t = toy_dir();
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&3u32.to_le_bytes());
        bytes.extend_from_slice(&1u32.to_le_bytes());
        for v in [0.5f32, -2.0, 4.0] {
            bytes.extend_from_slice(&v.to_le_bytes());
        }
        fs::write(t.path().join(FEATURES_BIN), &bytes).unwrap();
        let g = load_graph(t.path()).unwrap();
        assert_eq!(g.features.shape(), (3, 1));
        assert_eq!(g.features.get(1, 0), -2.0);
        bytes.pop();
        fs::write(t.path().join(FEATURES_BIN), &bytes).unwrap();
        assert!(load_graph(t.path()).is_err());
    }

    #[test]
    fn canonical_round_trip() {
        let t = toy_dir();
        let g = load_graph(t.path()).unwrap();
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        write_graph(&g, a.path()).unwrap();
        let g2 = load_graph(a.path()).unwrap();
        assert_eq!(g, g2);
        write_graph(&g2, b.path()).unwrap();
        for f in [
            EDGES_FILE,
            FEATURES_FILE,
            LABELS_FILE,
            SPLITS_FILE,
            META_FILE,
        ] {
            assert_eq!(
                fs::read(a.path().join(f)).unwrap(),
                fs::read(b.path().join(f)).unwrap(),
                "{f}"
            );
        }
    }
}
