//! Greedy surrogate-gradient structure attack.
//!
//! A linear two-hop surrogate `Z = Â²XW + b` is fit on the clean graph. The
//! attack then maximizes the surrogate's training NLL in rounds: every pair is
//! ranked by its first-order loss change (the gradient w.r.t. a dense
//! symmetric relaxation of the adjacency, including the degree-normalization
//! terms), a shortlist of the best is re-scored by the exact loss after the
//! flip, and the `max(budget / 10, 1)` best are applied before re-linearizing.

use std::collections::HashSet;

use crate::error::{Result, SfrError};
use crate::graph::{adjacency_from_edges, normalize_adjacency, Graph};
use crate::numeric::{AdamConfig, AdamState, CsrMatrix, DenseMatrix};
use crate::rng::RngState;
use crate::trainer::TrainConfig;

use super::{budget_for, Flip, FlipAction, PerturbationPlan};

/// Largest graph the dense `N × N` gradient buffer is built for.
pub const DENSE_NODE_CAP: usize = 5000;

/// Linear two-hop surrogate.
#[derive(Clone, Debug, PartialEq)]
pub struct SgcSurrogate {
    pub weight: DenseMatrix<f64>,
    pub bias: Vec<f64>,
}

fn log_softmax_rows(z: &mut DenseMatrix<f64>) {
    for i in 0..z.rows() {
        let row = z.row_mut(i);
        let max = row.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b));
        let log_z = max + row.iter().map(|&v| (v - max).exp()).sum::<f64>().ln();
        for v in row.iter_mut() {
            *v -= log_z;
        }
    }
}

impl SgcSurrogate {
    /// Fits the surrogate by Adam on the training rows of `Â²X`, starting
    /// from zero weights (the objective is convex).
    pub fn fit(g: &Graph, cfg: &TrainConfig) -> Result<Self> {
        let train = g.splits.train_indices();
        if train.is_empty() {
            return Err(SfrError::validation(
                "surrogate needs a non-empty training set",
            ));
        }
        let prop = normalize_adjacency(&g.adjacency)?;
        let two_hop = prop.matmul_dense(&prop.matmul_dense(&g.features)?)?;
        let d = g.num_features();
        let c = g.num_classes;
        let s = DenseMatrix::from_fn(train.len(), d, |r, j| two_hop.get(train[r], j));
        let labels: Vec<usize> = train.iter().map(|&v| g.labels[v]).collect();

        let mut weight = DenseMatrix::zeros(d, c);
        let mut bias = vec![0.0; c];
        let adam = AdamConfig::new(cfg.lr, cfg.weight_decay);
        let mut state = AdamState::new(&[d * c, c]);
        let inv_t = 1.0 / train.len() as f64;
        for _ in 0..cfg.pretrain_epochs.max(1) {
            let mut z = s.matmul(&weight)?;
            z.add_row_vector(&bias);
            log_softmax_rows(&mut z);
            let mut grad = z.map(|lp| lp.exp() * inv_t);
            for (r, &y) in labels.iter().enumerate() {
                let v = grad.get(r, y);
                grad.set(r, y, v - inv_t);
            }
            let gw = s.t_matmul(&grad)?;
            let gb = grad.col_sums();
            state.update(
                &adam,
                &mut [weight.data_mut(), &mut bias],
                &[gw.data(), &gb],
            );
        }
        let out = SgcSurrogate { weight, bias };
        out.weight.check_finite("surrogate weights")?;
        Ok(out)
    }

    /// Log-probabilities `log_softmax(Â²XW + b)` for a binary adjacency.
    pub fn log_probs(&self, g: &Graph, adjacency: &CsrMatrix<f64>) -> Result<DenseMatrix<f64>> {
        let prop = normalize_adjacency(adjacency)?;
        let m = g.feature_matrix::<f64>().matmul_dense(&self.weight)?;
        let mut z = prop.matmul_dense(&prop.matmul_dense(&m)?)?;
        z.add_row_vector(&self.bias);
        log_softmax_rows(&mut z);
        Ok(z)
    }

    /// Mean NLL over the training nodes for a binary adjacency.
    pub fn train_loss(&self, g: &Graph, adjacency: &CsrMatrix<f64>) -> Result<f64> {
        let lp = self.log_probs(g, adjacency)?;
        let train = g.splits.train_indices();
        Ok(-train.iter().map(|&v| lp.get(v, g.labels[v])).sum::<f64>() / train.len() as f64)
    }

    /// First-order loss increase of toggling each pair `(u, v)`, `u < v`, of
    /// the binary adjacency, as a dense upper-triangular score matrix.
    pub fn flip_scores(&self, g: &Graph, adjacency: &CsrMatrix<f64>) -> Result<DenseMatrix<f64>> {
        let n = g.num_nodes();
        let prop = normalize_adjacency(adjacency)?;
        let deg: Vec<f64> = (0..n).map(|i| (adjacency.row_nnz(i) + 1) as f64).collect();
        let m = g.feature_matrix::<f64>().matmul_dense(&self.weight)?;
        let h = prop.matmul_dense(&m)?;
        let mut z = prop.matmul_dense(&h)?;
        z.add_row_vector(&self.bias);
        log_softmax_rows(&mut z);

        // dL/dZ on training rows: (softmax − onehot) / T
        let train = g.splits.train_indices();
        let inv_t = 1.0 / train.len() as f64;
        let mut grad_z = DenseMatrix::zeros(n, g.num_classes);
        for &v in &train {
            for (k, o) in grad_z.row_mut(v).iter_mut().enumerate() {
                *o = z.get(v, k).exp() * inv_t;
            }
            let y = g.labels[v];
            grad_z.set(v, y, grad_z.get(v, y) - inv_t);
        }

        // dL/dÂ = G·Hᵀ + (ÂᵀG)·Mᵀ, treating Â entries as independent
        let mut grad_prop = grad_z.matmul_t(&h)?;
        grad_prop.add_assign(&prop.t_matmul_dense(&grad_z)?.matmul_t(&m)?);

        // chain rule through d̃: c_i = −1/(2 d̃_i) Σ_l (GÂ_il + GÂ_li) Â_il
        let corr: Vec<f64> = (0..n)
            .map(|i| {
                let (cols, vals) = prop.row(i);
                let s: f64 = cols
                    .iter()
                    .zip(vals)
                    .map(|(&l, &a)| (grad_prop.get(i, l) + grad_prop.get(l, i)) * a)
                    .sum();
                -s / (2.0 * deg[i])
            })
            .collect();

        let mut scores = DenseMatrix::zeros(n, n);
        for u in 0..n {
            for v in u + 1..n {
                let direct = (grad_prop.get(u, v) + grad_prop.get(v, u)) / (deg[u] * deg[v]).sqrt();
                let total = direct + corr[u] + corr[v];
                let sign = if adjacency.contains(u, v) { -1.0 } else { 1.0 };
                scores.set(u, v, total * sign);
            }
        }
        Ok(scores)
    }
}

/// Gradient candidates re-scored exactly per round.
pub const DEFAULT_SHORTLIST: usize = 32;

/// Greedy flips against a fitted surrogate.
///
/// Each round ranks every unused pair by its first-order score, re-scores
/// the best `max(shortlist, 2·take)` by the exact surrogate loss after the
/// single flip, and applies the `take = max(budget / 10, 1)` best. Ties go to
/// the lexicographically smallest pair.
pub fn greedy_flips(
    g: &Graph,
    surrogate: &SgcSurrogate,
    budget: usize,
    shortlist: usize,
) -> Result<Vec<Flip>> {
    let n = g.num_nodes();
    let step = (budget / 10).max(1);
    let mut edges: HashSet<(usize, usize)> = g.edges().into_iter().collect();
    let mut adjacency = g.adjacency.clone();
    let mut used = HashSet::new();
    let mut flips = Vec::with_capacity(budget);
    let available = n * n.saturating_sub(1) / 2;
    let order = |a: &(f64, usize, usize), b: &(f64, usize, usize)| {
        b.0.total_cmp(&a.0).then((a.1, a.2).cmp(&(b.1, b.2)))
    };
    while flips.len() < budget.min(available) {
        let scores = surrogate.flip_scores(g, &adjacency)?;
        let mut cand: Vec<(f64, usize, usize)> = Vec::with_capacity(available - used.len());
        for u in 0..n {
            for v in u + 1..n {
                if !used.contains(&(u, v)) {
                    cand.push((scores.get(u, v), u, v));
                }
            }
        }
        let take = step.min(budget - flips.len()).min(cand.len());
        let keep = shortlist.max(2 * take).min(cand.len());
        if keep < cand.len() {
            cand.select_nth_unstable_by(keep, order);
            cand.truncate(keep);
        }
        if shortlist > 0 {
            let mut list: Vec<_> = edges.iter().copied().collect();
            list.sort_unstable();
            for c in cand.iter_mut() {
                let (u, v) = (c.1, c.2);
                let flipped: Vec<_> = if edges.contains(&(u, v)) {
                    list.iter().copied().filter(|&p| p != (u, v)).collect()
                } else {
                    let mut l = list.clone();
                    l.push((u, v));
                    l
                };
                c.0 = surrogate.train_loss(g, &adjacency_from_edges(n, &flipped)?)?;
            }
        }
        cand.sort_unstable_by(order);
        for &(_, u, v) in &cand[..take] {
            used.insert((u, v));
            let action = if edges.remove(&(u, v)) {
                FlipAction::Remove
            } else {
                edges.insert((u, v));
                FlipAction::Add
            };
            flips.push(Flip::new(u, v, action));
        }
        let mut list: Vec<_> = edges.iter().copied().collect();
        list.sort_unstable();
        adjacency = adjacency_from_edges(n, &list)?;
    }
    Ok(flips)
}

/// Surrogate-gradient greedy attack with budget `round(ptb_ratio · E)`.
///
/// Reads training labels only. Fails with a capacity error above
/// [`DENSE_NODE_CAP`] nodes.
pub fn sgc_gradient_attack(
    g: &Graph,
    ptb_ratio: f64,
    cfg: &TrainConfig,
    _rng: RngState,
) -> Result<PerturbationPlan> {
    let budget = budget_for(g, ptb_ratio)?;
    if g.num_nodes() > DENSE_NODE_CAP {
        return Err(SfrError::Capacity(format!(
            "gradient attack builds a dense {n}x{n} buffer; graphs above {DENSE_NODE_CAP} nodes must use \
             the random or dice attacks",
            n = g.num_nodes()
        )));
    }
    if budget == 0 {
        return Ok(PerturbationPlan::empty(ptb_ratio));
    }
    let surrogate = SgcSurrogate::fit(g, cfg)?;
    let flips = greedy_flips(g, &surrogate, budget, DEFAULT_SHORTLIST)?;
    Ok(PerturbationPlan {
        flips,
        budget,
        ptb_ratio,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::synth::{sbm, SbmConfig};

    fn toy(n: usize, seed: u64) -> Graph {
        let mut cfg = SbmConfig::new(n, 2, 0.4, 0.1);
        cfg.feature_dim = 6;
        cfg.train_ratio = 0.5;
        cfg.val_ratio = 0.2;
        sbm(&cfg, RngState::new(seed)).unwrap()
    }

    /// Central differences of the surrogate loss along a symmetric pair
    /// direction of the relaxed adjacency.
    #[test]
    fn scores_match_finite_differences_of_relaxation() {
        let g = toy(10, 3);
        let cfg = TrainConfig::default();
        let s = SgcSurrogate::fit(&g, &cfg).unwrap();
        let scores = s.flip_scores(&g, &g.adjacency).unwrap();
        let dense = g.adjacency.to_dense();
        let loss_at = |a: &DenseMatrix<f64>| -> f64 {
            // Â = D̃^{-1/2}(A+I)D̃^{-1/2} with real-valued A
            let n = a.rows();
            let deg: Vec<f64> = (0..n)
                .map(|i| 1.0 + (0..n).map(|j| a.get(i, j)).sum::<f64>())
                .collect();
            let p = DenseMatrix::from_fn(n, n, |i, j| {
                (a.get(i, j) + (i == j) as u8 as f64) / (deg[i] * deg[j]).sqrt()
            });
            let m = g.features.matmul(&s.weight).unwrap();
            let mut z = p.matmul(&p.matmul(&m).unwrap()).unwrap();
            z.add_row_vector(&s.bias);
            log_softmax_rows(&mut z);
            let train = g.splits.train_indices();
            -train.iter().map(|&v| z.get(v, g.labels[v])).sum::<f64>() / train.len() as f64
        };
        let eps = 1e-6;
        for (u, v) in [(0, 1), (2, 7), (3, 9), (4, 5)] {
            let mut plus = dense.clone();
            let mut minus = dense.clone();
            for (a, b) in [(u, v), (v, u)] {
                plus.set(a, b, dense.get(a, b) + eps);
                minus.set(a, b, dense.get(a, b) - eps);
            }
            let fd = (loss_at(&plus) - loss_at(&minus)) / (2.0 * eps);
            let sign = if g.has_edge(u, v) { -1.0 } else { 1.0 };
            let got = scores.get(u, v);
            assert!(
                (got - sign * fd).abs() <= 1e-6 * fd.abs().max(1e-3),
                "({u},{v}): {got} vs {}",
                sign * fd
            );
        }
    }

    #[test]
    fn budget_zero_and_determinism() {
        let g = toy(12, 1);
        let cfg = TrainConfig::default();
        assert!(sgc_gradient_attack(&g, 0.0, &cfg, RngState::new(0))
            .unwrap()
            .is_empty());
        let a = sgc_gradient_attack(&g, 0.3, &cfg, RngState::new(0)).unwrap();
        assert_eq!(
            a,
            sgc_gradient_attack(&g, 0.3, &cfg, RngState::new(0)).unwrap()
        );
        assert_eq!(a.len(), a.budget);
        a.validate(&g).unwrap();
    }

    #[test]
    fn attack_increases_surrogate_loss() {
        let g = toy(30, 2);
        let cfg = TrainConfig::default();
        let s = SgcSurrogate::fit(&g, &cfg).unwrap();
        let plan = sgc_gradient_attack(&g, 0.2, &cfg, RngState::new(0)).unwrap();
        let h = super::super::apply_perturbation(&g, &plan).unwrap();
        assert!(s.train_loss(&g, &h.adjacency).unwrap() > s.train_loss(&g, &g.adjacency).unwrap());
    }

    #[test]
    fn capacity_error_above_cap() {
        let n = DENSE_NODE_CAP + 1;
        let g = Graph::new(
            "big",
            DenseMatrix::zeros(n, 1),
            crate::graph::adjacency_from_edges(n, &[(0, 1), (1, 2)]).unwrap(),
            vec![0; n],
            crate::graph::make_split(n, 0.1, 0.1, 0).unwrap(),
            1,
        )
        .unwrap();
        let err =
            sgc_gradient_attack(&g, 0.5, &TrainConfig::default(), RngState::new(0)).unwrap_err();
        assert_eq!(err.exit_code(), 3);
    }
}
