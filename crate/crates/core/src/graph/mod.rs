//! Dataset representation, splits, adjacency normalization and statistics.

mod io;
pub mod synth;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfrError};
use crate::numeric::{CsrMatrix, DenseMatrix, Real};
use crate::rng::RngState;

pub use io::{load_graph, write_graph, SPLITS_FILE};

/// Disjoint train/val/test node masks covering every node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitMasks {
    pub train: Vec<bool>,
    pub val: Vec<bool>,
    pub test: Vec<bool>,
}

impl SplitMasks {
    pub fn from_indices(n: usize, train: &[usize], val: &[usize], test: &[usize]) -> Result<Self> {
        let mut masks = SplitMasks {
            train: vec![false; n],
            val: vec![false; n],
            test: vec![false; n],
        };
        for (ids, mask) in [
            (train, &mut masks.train),
            (val, &mut masks.val),
            (test, &mut masks.test),
        ] {
            for &i in ids {
                if i >= n {
                    return Err(SfrError::validation(format!(
                        "split node id {i} out of range for {n} nodes"
                    )));
                }
                mask[i] = true;
            }
        }
        masks.validate()?;
        Ok(masks)
    }

    pub fn len(&self) -> usize {
        self.train.len()
    }

    pub fn is_empty(&self) -> bool {
        self.train.is_empty()
    }

    /// Pairwise disjoint, covering, equal lengths.
    pub fn validate(&self) -> Result<()> {
        let n = self.train.len();
        if self.val.len() != n || self.test.len() != n {
            return Err(SfrError::validation("split masks differ in length"));
        }
        for i in 0..n {
            let k = self.train[i] as u8 + self.val[i] as u8 + self.test[i] as u8;
            if k != 1 {
                return Err(SfrError::validation(format!(
                    "node {i} belongs to {k} splits; splits must partition the nodes"
                )));
            }
        }
        Ok(())
    }

    pub fn train_indices(&self) -> Vec<usize> {
        indices(&self.train)
    }

    pub fn val_indices(&self) -> Vec<usize> {
        indices(&self.val)
    }

    pub fn test_indices(&self) -> Vec<usize> {
        indices(&self.test)
    }

    pub fn counts(&self) -> (usize, usize, usize) {
        let c = |m: &[bool]| m.iter().filter(|&&b| b).count();
        (c(&self.train), c(&self.val), c(&self.test))
    }
}

pub(crate) fn indices(mask: &[bool]) -> Vec<usize> {
    mask.iter()
        .enumerate()
        .filter(|(_, &b)| b)
        .map(|(i, _)| i)
        .collect()
}

/// One attributed, labeled, undirected graph.
///
/// `adjacency` is binary, symmetric and has an empty diagonal; self-loops
/// only appear inside [`normalize_adjacency`].
#[derive(Clone, Debug, PartialEq)]
pub struct Graph {
    pub name: String,
    pub features: DenseMatrix<f64>,
    pub adjacency: CsrMatrix<f64>,
    pub labels: Vec<usize>,
    pub splits: SplitMasks,
    pub num_classes: usize,
}

impl Graph {
    pub fn new(
        name: impl Into<String>,
        features: DenseMatrix<f64>,
        adjacency: CsrMatrix<f64>,
        labels: Vec<usize>,
        splits: SplitMasks,
        num_classes: usize,
    ) -> Result<Self> {
        let g = Graph {
            name: name.into(),
            features,
            adjacency,
            labels,
            splits,
            num_classes,
        };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.features.rows();
        if self.adjacency.rows() != n || self.adjacency.cols() != n {
            return Err(SfrError::validation(format!(
                "adjacency is {}x{} but there are {n} feature rows",
                self.adjacency.rows(),
                self.adjacency.cols()
            )));
        }
        if self.labels.len() != n {
            return Err(SfrError::validation(format!(
                "{} labels for {n} nodes",
                self.labels.len()
            )));
        }
        if let Some((i, &y)) = self
            .labels
            .iter()
            .enumerate()
            .find(|(_, &y)| y >= self.num_classes)
        {
            return Err(SfrError::validation(format!(
                "node {i} has label {y}, expected < {}",
                self.num_classes
            )));
        }
        if self.splits.len() != n {
            return Err(SfrError::validation(
                "split masks do not match the node count",
            ));
        }
        self.splits.validate()?;
        check_simple_adjacency(&self.adjacency)?;
        self.features.check_finite("graph features")
    }

    pub fn num_nodes(&self) -> usize {
        self.features.rows()
    }

    pub fn num_features(&self) -> usize {
        self.features.cols()
    }

    /// Undirected edge count.
    pub fn num_edges(&self) -> usize {
        self.adjacency.nnz() / 2
    }

    pub fn degree(&self, i: usize) -> usize {
        self.adjacency.row_nnz(i)
    }

    pub fn degrees(&self) -> Vec<usize> {
        (0..self.num_nodes()).map(|i| self.degree(i)).collect()
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        self.adjacency.row(i).0
    }

    pub fn has_edge(&self, u: usize, v: usize) -> bool {
        self.adjacency.contains(u, v)
    }

    /// Undirected edges as `(u, v)` with `u < v`, sorted.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        edge_list(&self.adjacency)
    }

    /// Same attributes, labels and splits on a different edge set.
    pub fn with_edges(&self, edges: &[(usize, usize)]) -> Result<Graph> {
        Ok(Graph {
            adjacency: adjacency_from_edges(self.num_nodes(), edges)?,
            ..self.clone()
        })
    }

    pub fn with_splits(&self, splits: SplitMasks) -> Result<Graph> {
        if splits.len() != self.num_nodes() {
            return Err(SfrError::validation(
                "split masks do not match the node count",
            ));
        }
        splits.validate()?;
        Ok(Graph {
            splits,
            ..self.clone()
        })
    }

    /// Attributes as a sparse matrix in the model precision.
    pub fn feature_matrix<T: Real>(&self) -> CsrMatrix<T> {
        CsrMatrix::from_dense(&self.features).cast()
    }
}

/// Binary, symmetric, zero-diagonal.
pub fn check_simple_adjacency(adj: &CsrMatrix<f64>) -> Result<()> {
    if adj.rows() != adj.cols() {
        return Err(SfrError::validation("adjacency must be square"));
    }
    for i in 0..adj.rows() {
        let (cols, vals) = adj.row(i);
        if cols.binary_search(&i).is_ok() {
            return Err(SfrError::validation(format!(
                "adjacency has a self-loop at node {i}"
            )));
        }
        if vals.iter().any(|&v| v != 1.0) {
            return Err(SfrError::validation(format!(
                "adjacency row {i} is not binary"
            )));
        }
    }
    if !adj.is_structurally_symmetric() {
        return Err(SfrError::validation("adjacency is not symmetric"));
    }
    Ok(())
}

pub fn edge_list(adj: &CsrMatrix<f64>) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(adj.nnz() / 2);
    for u in 0..adj.rows() {
        for &v in adj.row(u).0 {
            if u < v {
                out.push((u, v));
            }
        }
    }
    out
}

/// Binary symmetric adjacency from undirected edges. Duplicates and reversed
/// duplicates collapse; self-loops and out-of-range ids are rejected.
pub fn adjacency_from_edges(n: usize, edges: &[(usize, usize)]) -> Result<CsrMatrix<f64>> {
    let mut rows: Vec<Vec<usize>> = vec![Vec::new(); n];
    for &(u, v) in edges {
        if u >= n || v >= n {
            return Err(SfrError::validation(format!(
                "edge ({u}, {v}) references a node >= {n}"
            )));
        }
        if u == v {
            return Err(SfrError::validation(format!("self-loop on node {u}")));
        }
        rows[u].push(v);
        rows[v].push(u);
    }
    let entries = rows
        .into_iter()
        .map(|mut r| {
            r.sort_unstable();
            r.dedup();
            r.into_iter().map(|j| (j, 1.0)).collect()
        })
        .collect();
    CsrMatrix::from_rows(n, n, entries)
}

/// `D̃^{-1/2}(A + I)D̃^{-1/2}` with `d̃_i = deg_i + 1`.
pub fn normalize_adjacency(adj: &CsrMatrix<f64>) -> Result<CsrMatrix<f64>> {
    let n = adj.rows();
    if adj.cols() != n {
        return Err(SfrError::validation(
            "normalize_adjacency: adjacency must be square",
        ));
    }
    if let Some(i) = (0..n).find(|&i| adj.contains(i, i)) {
        return Err(SfrError::validation(format!(
            "normalize_adjacency: nonzero diagonal at node {i}; self-loops are added internally"
        )));
    }
    let deg: Vec<f64> = (0..n).map(|i| (adj.row_nnz(i) + 1) as f64).collect();
    let mut entries = Vec::with_capacity(n);
    for i in 0..n {
        let cols = adj.row(i).0;
        let mut row = Vec::with_capacity(cols.len() + 1);
        let pos = cols.partition_point(|&j| j < i);
        for &j in cols[..pos]
            .iter()
            .chain(std::iter::once(&i))
            .chain(&cols[pos..])
        {
            row.push((j, 1.0 / (deg[i] * deg[j]).sqrt()));
        }
        entries.push(row);
    }
    CsrMatrix::from_rows(n, n, entries)
}

/// Random split with `floor(ratio·n)` train and val nodes; test takes the rest.
pub fn make_split(n: usize, train_ratio: f64, val_ratio: f64, seed: u64) -> Result<SplitMasks> {
    if n < 3 {
        return Err(SfrError::validation(format!(
            "make_split needs at least 3 nodes, got {n}"
        )));
    }
    let ok = |r: f64| r.is_finite() && r > 0.0 && r < 1.0;
    if !ok(train_ratio) || !ok(val_ratio) || train_ratio + val_ratio >= 1.0 {
        return Err(SfrError::validation(format!(
            "split ratios must be in (0, 1) with sum < 1, got train={train_ratio} val={val_ratio}"
        )));
    }
    // the epsilon keeps exact products such as 0.1·2710 from flooring low
    let n_train = (train_ratio * n as f64 + 1e-9).floor() as usize;
    let n_val = (val_ratio * n as f64 + 1e-9).floor() as usize;
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut RngState::new(seed).derive("split").rng());
    SplitMasks::from_indices(
        n,
        &order[..n_train],
        &order[n_train..n_train + n_val],
        &order[n_train + n_val..],
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GraphStats {
    pub num_nodes: usize,
    pub num_edges: usize,
    pub avg_degree: f64,
    pub homophily_ratio: f64,
}

/// Homophily is 0 for an edgeless graph.
pub fn graph_stats(g: &Graph) -> GraphStats {
    let n = g.num_nodes();
    let edges = g.edges();
    let same = edges
        .iter()
        .filter(|&&(u, v)| g.labels[u] == g.labels[v])
        .count();
    GraphStats {
        num_nodes: n,
        num_edges: edges.len(),
        avg_degree: if n == 0 {
            0.0
        } else {
            2.0 * edges.len() as f64 / n as f64
        },
        homophily_ratio: if edges.is_empty() {
            0.0
        } else {
            same as f64 / edges.len() as f64
        },
    }
}
