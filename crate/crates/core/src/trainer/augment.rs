//! Augmented views for the contrastive term: inter-class attribute
//! augmentation and the generic corruptions used by the ablations.

use rand::seq::{index, SliceRandom};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfrError};
use crate::graph::{adjacency_from_edges, indices, Graph};
use crate::numeric::{CsrMatrix, DenseMatrix};
use crate::rng::RngState;

/// Donors drawn for one replaced training node.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DonorRecord {
    pub node: usize,
    pub donors: Vec<usize>,
}

/// Attributes with selected training rows replaced by donor means.
#[derive(Clone, Debug, PartialEq)]
pub struct AugmentedFeatures {
    pub x_inter: DenseMatrix<f64>,
    pub replaced_mask: Vec<bool>,
    /// One record per replaced node, in node order.
    pub sample_log: Vec<DonorRecord>,
}

/// How donors are chosen for a training node.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DonorPool {
    /// Training nodes of a different class.
    InterClass,
    /// Any training node.
    Uniform,
}

/// Inter-class node attribute augmentation.
///
/// A `subsample_ratio` fraction of the training nodes (all of them at 1.0)
/// gets its attribute row replaced by the mean of `max(degree, 1)` rows drawn
/// from training nodes of other classes. Sampling is without replacement
/// unless the pool is smaller than the request. Degrees come from the
/// (possibly poisoned) input adjacency.
pub fn internaa(g: &Graph, rng: RngState, subsample_ratio: f64) -> Result<AugmentedFeatures> {
    augment_with_donors(g, rng, subsample_ratio, DonorPool::InterClass)
}

pub fn augment_with_donors(
    g: &Graph,
    rng: RngState,
    subsample_ratio: f64,
    pool: DonorPool,
) -> Result<AugmentedFeatures> {
    if !(subsample_ratio > 0.0 && subsample_ratio <= 1.0) {
        return Err(SfrError::validation(format!(
            "subsample ratio must be in (0, 1], got {subsample_ratio}"
        )));
    }
    let train = g.splits.train_indices();
    if train.is_empty() {
        return Err(SfrError::Augmentation("training set is empty".into()));
    }
    if pool == DonorPool::InterClass {
        let first = g.labels[train[0]];
        if train.iter().all(|&v| g.labels[v] == first) {
            return Err(SfrError::Augmentation(
                "training set has a single class; inter-class donors do not exist".into(),
            ));
        }
    }

    let mut r = rng.rng();
    let count = ((subsample_ratio * train.len() as f64).round() as usize).clamp(1, train.len());
    let mut selected: Vec<usize> = if count == train.len() {
        train.clone()
    } else {
        index::sample(&mut r, train.len(), count)
            .into_iter()
            .map(|k| train[k])
            .collect()
    };
    selected.sort_unstable();

    let n = g.num_nodes();
    let d = g.num_features();
    let mut x_inter = g.features.clone();
    let mut replaced_mask = vec![false; n];
    let mut sample_log = Vec::with_capacity(selected.len());
    for v in selected {
        let candidates: Vec<usize> = match pool {
            DonorPool::InterClass => train
                .iter()
                .copied()
                .filter(|&u| g.labels[u] != g.labels[v])
                .collect(),
            DonorPool::Uniform => train.clone(),
        };
        let k = g.degree(v).max(1);
        let donors: Vec<usize> = if candidates.len() >= k {
            index::sample(&mut r, candidates.len(), k)
                .into_iter()
                .map(|i| candidates[i])
                .collect()
        } else {
            (0..k)
                .map(|_| candidates[r.gen_range(0..candidates.len())])
                .collect()
        };
        let row = x_inter.row_mut(v);
        row.fill(0.0);
        for &u in &donors {
            for (o, &x) in row.iter_mut().zip(g.features.row(u)) {
                *o += x;
            }
        }
        let kf = k as f64;
        for o in row.iter_mut() {
            *o /= kf;
        }
        debug_assert_eq!(row.len(), d);
        replaced_mask[v] = true;
        sample_log.push(DonorRecord { node: v, donors });
    }
    Ok(AugmentedFeatures {
        x_inter,
        replaced_mask,
        sample_log,
    })
}

/// A corrupted copy of the graph used as the second contrastive view.
#[derive(Clone, Debug, PartialEq)]
pub struct CorruptedView {
    pub features: DenseMatrix<f64>,
    /// `None` keeps the input adjacency.
    pub adjacency: Option<CsrMatrix<f64>>,
}

fn count_at(rate: f64, total: usize) -> usize {
    ((rate * total as f64).round() as usize).min(total)
}

fn check_rate(rate: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&rate) {
        return Err(SfrError::validation(format!(
            "corruption rate must be in [0, 1], got {rate}"
        )));
    }
    Ok(())
}

/// Drops a `rate` fraction of nodes: their attributes are zeroed and their
/// incident edges removed.
pub fn node_dropping(g: &Graph, rate: f64, rng: RngState) -> Result<CorruptedView> {
    check_rate(rate)?;
    let n = g.num_nodes();
    let mut dropped = vec![false; n];
    for i in index::sample(&mut rng.rng(), n, count_at(rate, n)) {
        dropped[i] = true;
    }
    let mut features = g.features.clone();
    for i in indices(&dropped) {
        features.row_mut(i).fill(0.0);
    }
    let edges: Vec<_> = g
        .edges()
        .into_iter()
        .filter(|&(u, v)| !dropped[u] && !dropped[v])
        .collect();
    Ok(CorruptedView {
        features,
        adjacency: Some(adjacency_from_edges(n, &edges)?),
    })
}

/// Removes a uniformly random `rate` fraction of edges.
pub fn edge_removing(g: &Graph, rate: f64, rng: RngState) -> Result<CorruptedView> {
    check_rate(rate)?;
    let mut edges = g.edges();
    let keep = edges.len() - count_at(rate, edges.len());
    edges.shuffle(&mut rng.rng());
    edges.truncate(keep);
    Ok(CorruptedView {
        features: g.features.clone(),
        adjacency: Some(adjacency_from_edges(g.num_nodes(), &edges)?),
    })
}

/// Zeroes a uniformly random `rate` fraction of attribute columns.
pub fn feature_masking(g: &Graph, rate: f64, rng: RngState) -> Result<CorruptedView> {
    check_rate(rate)?;
    let d = g.num_features();
    let cols = index::sample(&mut rng.rng(), d, count_at(rate, d)).into_vec();
    let mut features = g.features.clone();
    for i in 0..g.num_nodes() {
        let row = features.row_mut(i);
        for &j in &cols {
            row[j] = 0.0;
        }
    }
    Ok(CorruptedView {
        features,
        adjacency: None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{make_split, SplitMasks};

    fn toy() -> Graph {
        // 6 nodes, all in train, classes 0,0,0,1,1,1
        let edges = [(0, 1), (0, 2), (1, 3), (3, 4), (4, 5)];
        Graph::new(
            "toy",
            DenseMatrix::from_fn(6, 3, |i, j| (i * 3 + j) as f64 * 0.25 - 1.0),
            adjacency_from_edges(6, &edges).unwrap(),
            vec![0, 0, 0, 1, 1, 1],
            SplitMasks::from_indices(6, &[0, 1, 2, 3, 4, 5], &[], &[]).unwrap(),
            2,
        )
        .unwrap()
    }

    #[test]
    fn donors_are_inter_class_and_mean_reconstructs() {
        let g = toy();
        let aug = internaa(&g, RngState::new(4), 1.0).unwrap();
        assert_eq!(aug.sample_log.len(), 6);
        for rec in &aug.sample_log {
            assert_eq!(rec.donors.len(), g.degree(rec.node).max(1));
            assert!(rec
                .donors
                .iter()
                .all(|&u| g.labels[u] != g.labels[rec.node]));
            let mut want = [0.0; 3];
            for &u in &rec.donors {
                for (w, x) in want.iter_mut().zip(g.features.row(u)) {
                    *w += x;
                }
            }
            for (j, w) in want.iter().enumerate() {
                assert!(
                    (aug.x_inter.get(rec.node, j) - w / rec.donors.len() as f64).abs() <= 1e-12
                );
            }
        }
    }

    #[test]
    fn identical_donor_rows_give_that_row() {
        let mut g = toy();
        for i in 3..6 {
            g.features.row_mut(i).copy_from_slice(&[7.0, -1.0, 0.5]);
        }
        let aug = internaa(&g, RngState::new(0), 1.0).unwrap();
        // node 0 has degree 2, every class-1 donor has the same row
        assert_eq!(aug.x_inter.row(0), &[7.0, -1.0, 0.5]);
    }

    #[test]
    fn isolated_node_gets_one_donor() {
        let g = toy().with_edges(&[(0, 1)]).unwrap();
        let aug = internaa(&g, RngState::new(1), 1.0).unwrap();
        let rec = aug.sample_log.iter().find(|r| r.node == 5).unwrap();
        assert_eq!(rec.donors.len(), 1);
    }

    #[test]
    fn small_pool_samples_with_replacement() {
        // node 1 has degree 4 but only 3 other-class candidates
        let g = toy().with_edges(&[(1, 0), (1, 2), (1, 4), (1, 5)]).unwrap();
        let aug = internaa(&g, RngState::new(2), 1.0).unwrap();
        let rec = aug.sample_log.iter().find(|r| r.node == 1).unwrap();
        assert_eq!(rec.donors.len(), 4);
        assert!(rec.donors.iter().all(|&u| u >= 3));
    }

    #[test]
    fn subsample_and_untouched_rows() {
        let mut g = toy();
        g.splits = make_split(6, 0.5, 0.2, 9).unwrap();
        let aug = internaa(&g, RngState::new(3), 0.5).unwrap();
        let train = g.splits.train_indices();
        assert_eq!(
            aug.sample_log.len(),
            (train.len() as f64 * 0.5).round() as usize
        );
        for i in 0..6 {
            if aug.replaced_mask[i] {
                assert!(g.splits.train[i]);
            } else {
                assert_eq!(aug.x_inter.row(i), g.features.row(i));
            }
        }
    }

    #[test]
    fn single_class_is_an_error() {
        let mut g = toy();
        g.labels = vec![0; 6];
        assert!(matches!(
            internaa(&g, RngState::new(0), 1.0),
            Err(SfrError::Augmentation(_))
        ));
        assert!(augment_with_donors(&g, RngState::new(0), 1.0, DonorPool::Uniform).is_ok());
    }

    #[test]
    fn corruptions() {
        let g = toy();
        let nd = node_dropping(&g, 0.5, RngState::new(0)).unwrap();
        let zero_rows = (0..6)
            .filter(|&i| nd.features.row(i).iter().all(|&x| x == 0.0))
            .count();
        assert_eq!(zero_rows, 3);
        let er = edge_removing(&g, 0.2, RngState::new(0)).unwrap();
        assert_eq!(er.adjacency.unwrap().nnz() / 2, 4);
        let fm = feature_masking(&g, 0.34, RngState::new(0)).unwrap();
        let zero_cols = (0..3)
            .filter(|&j| (0..6).all(|i| fm.features.get(i, j) == 0.0))
            .count();
        assert_eq!(zero_cols, 1);
        assert!(fm.adjacency.is_none());
    }
}
