use crate::error::{Result, SfrError};
use crate::graph::Graph;

pub const DEFAULT_JACCARD_THRESHOLD: f64 = 0.01;

/// Jaccard similarity of two sorted index sets; 0 when both are empty.
pub fn jaccard_similarity(a: &[usize], b: &[usize]) -> f64 {
    let (mut i, mut j, mut inter) = (0, 0, 0usize);
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                inter += 1;
                i += 1;
                j += 1;
            }
        }
    }
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

/// Removes every edge whose endpoints' attribute supports (nonzero columns)
/// have Jaccard similarity below `threshold`.
pub fn jaccard_prune(g: &Graph, threshold: f64) -> Result<Graph> {
    if !(0.0..=1.0).contains(&threshold) {
        return Err(SfrError::validation(format!(
            "jaccard threshold must be in [0, 1], got {threshold}"
        )));
    }
    let support: Vec<Vec<usize>> = (0..g.num_nodes())
        .map(|i| {
            g.features
                .row(i)
                .iter()
                .enumerate()
                .filter(|(_, &x)| x != 0.0)
                .map(|(j, _)| j)
                .collect()
        })
        .collect();
    let kept: Vec<_> = g
        .edges()
        .into_iter()
        .filter(|&(u, v)| jaccard_similarity(&support[u], &support[v]) >= threshold)
        .collect();
    g.with_edges(&kept)
}
