//! Synthetic graphs for tests and benchmarks.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use super::{adjacency_from_edges, make_split, Graph};
use crate::error::{Result, SfrError};
use crate::numeric::DenseMatrix;
use crate::rng::RngState;

/// Stochastic block model with sparse binary "bag-of-words" attributes.
///
/// Each class owns a block of `feature_dim / num_classes` topic columns. A
/// node switches on each column of its own block with probability
/// `word_in` and every other column with probability `word_out`, so the
/// attributes are informative but noisy, like citation-network features.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SbmConfig {
    pub num_nodes: usize,
    pub num_classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub feature_dim: usize,
    pub word_in: f64,
    pub word_out: f64,
    pub train_ratio: f64,
    pub val_ratio: f64,
}

impl SbmConfig {
    pub fn new(num_nodes: usize, num_classes: usize, p_in: f64, p_out: f64) -> Self {
        Self {
            num_nodes,
            num_classes,
            p_in,
            p_out,
            feature_dim: 8 * num_classes,
            word_in: 0.3,
            word_out: 0.1,
            train_ratio: 0.1,
            val_ratio: 0.1,
        }
    }
}

fn check_prob(name: &str, p: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&p) {
        return Err(SfrError::validation(format!(
            "{name} must be in [0, 1], got {p}"
        )));
    }
    Ok(())
}

/// Classes are assigned round-robin, so block sizes differ by at most one.
pub fn sbm(cfg: &SbmConfig, rng: RngState) -> Result<Graph> {
    let n = cfg.num_nodes;
    let c = cfg.num_classes;
    if c == 0 || n < 3 {
        return Err(SfrError::validation(
            "sbm needs at least 3 nodes and 1 class",
        ));
    }
    for (name, p) in [
        ("p_in", cfg.p_in),
        ("p_out", cfg.p_out),
        ("word_in", cfg.word_in),
        ("word_out", cfg.word_out),
    ] {
        check_prob(name, p)?;
    }
    let labels: Vec<usize> = (0..n).map(|i| i % c).collect();

    let mut edge_rng = rng.derive("sbm-edges").rng();
    let mut edges = Vec::new();
    for u in 0..n {
        for v in u + 1..n {
            let p = if labels[u] == labels[v] {
                cfg.p_in
            } else {
                cfg.p_out
            };
            if edge_rng.gen::<f64>() < p {
                edges.push((u, v));
            }
        }
    }

    let d = cfg.feature_dim;
    let block = (d / c).max(1);
    let mut feat_rng = rng.derive("sbm-features").rng();
    let features = DenseMatrix::from_fn(n, d, |i, j| {
        let own = j / block == labels[i];
        let p = if own { cfg.word_in } else { cfg.word_out };
        if feat_rng.gen::<f64>() < p {
            1.0
        } else {
            0.0
        }
    });

    let splits = make_split(
        n,
        cfg.train_ratio,
        cfg.val_ratio,
        rng.derive("sbm-split").seed(),
    )?;
    Graph::new(
        format!("sbm-n{n}-c{c}"),
        features,
        adjacency_from_edges(n, &edges)?,
        labels,
        splits,
        c,
    )
}

/// Edgeless graph with two Gaussian blobs in `d` dimensions whose centers
/// are `separation` apart along every axis.
pub fn gaussian_blobs(n: usize, d: usize, separation: f64, rng: RngState) -> Result<Graph> {
    if n < 3 || d == 0 {
        return Err(SfrError::validation(
            "gaussian_blobs needs n >= 3 and d >= 1",
        ));
    }
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut r = rng.derive("blobs").rng();
    let features = DenseMatrix::from_fn(n, d, |i, _| {
        let center = if labels[i] == 0 {
            -separation / 2.0
        } else {
            separation / 2.0
        };
        center + normal.sample(&mut r)
    });
    let splits = make_split(n, 0.5, 0.25, rng.derive("blobs-split").seed())?;
    Graph::new(
        "blobs",
        features,
        adjacency_from_edges(n, &[])?,
        labels,
        splits,
        2,
    )
}
