//! Paired-effect probe: is a structure poisoned against specific attributes
//! more harmful alongside those attributes than alongside degree-matched
//! shuffled ones?

use std::collections::BTreeMap;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::{repeat_seed, stats, trial_seed};
use crate::attacks::{apply_perturbation, sgc_gradient_attack};
use crate::error::Result;
use crate::graph::{load_graph, make_split, Graph};
use crate::numeric::DenseMatrix;
use crate::rng::RngState;
use crate::trainer::{predict, train, TrainConfig, Variant};

/// Median-difference band (percentage points) treated as a tie.
pub const INCONCLUSIVE_BAND: f64 = 0.5;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Supported,
    Inconclusive,
    Contradicted,
}

impl Verdict {
    pub fn from_difference(diff: f64) -> Self {
        if diff.abs() < INCONCLUSIVE_BAND {
            Verdict::Inconclusive
        } else if diff > 0.0 {
            Verdict::Supported
        } else {
            Verdict::Contradicted
        }
    }
}

/// Test accuracies (percentage points) of one seed's four GCN runs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedSeed {
    pub repeat: usize,
    pub seed: u64,
    pub flips: usize,
    pub clean_matched: f64,
    pub attacked_matched: f64,
    pub clean_mismatched: f64,
    pub attacked_mismatched: f64,
    pub drop_matched: f64,
    pub drop_mismatched: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PairedEffectReport {
    pub dataset: String,
    pub ptb_ratio: f64,
    pub repeats: usize,
    pub base_seed: u64,
    pub seeds: Vec<PairedSeed>,
    pub median_drop_matched: f64,
    pub median_drop_mismatched: f64,
    /// `median_drop_matched − median_drop_mismatched`.
    pub difference: f64,
    pub verdict: Verdict,
}

/// Permutes feature rows among nodes of equal degree. Nodes whose degree is
/// unique are pooled and permuted together, so every row can move.
pub fn degree_preserving_shuffle(g: &Graph, rng: RngState) -> DenseMatrix<f64> {
    let mut classes: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (i, d) in g.degrees().into_iter().enumerate() {
        classes.entry(d).or_default().push(i);
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut singletons = Vec::new();
    for (_, nodes) in classes {
        if nodes.len() == 1 {
            singletons.push(nodes[0]);
        } else {
            groups.push(nodes);
        }
    }
    groups.push(singletons);
    let mut r = rng.rng();
    let mut source: Vec<usize> = (0..g.num_nodes()).collect();
    for nodes in &groups {
        let mut perm = nodes.clone();
        perm.shuffle(&mut r);
        for (&dst, &src) in nodes.iter().zip(&perm) {
            source[dst] = src;
        }
    }
    let d = g.num_features();
    DenseMatrix::from_fn(g.num_nodes(), d, |i, j| g.features.get(source[i], j))
}

fn gcn_test_pct(g: &Graph, cfg: &TrainConfig, seed: u64) -> Result<f64> {
    let m = train::<f64>(g, cfg, Variant::Gcn, RngState::new(seed))?;
    Ok(predict(&m, g)?.accuracy.test * 100.0)
}

/// Loads the dataset and runs [`paired_effect_probe_on`] with default
/// training hyper-parameters.
pub fn paired_effect_probe(
    dataset: &Path,
    ptb_ratio: f64,
    repeats: usize,
    seed: u64,
) -> Result<PairedEffectReport> {
    let g = load_graph(dataset)?;
    paired_effect_probe_on(&g, ptb_ratio, repeats, seed, &TrainConfig::default())
}

/// Per repeat: draw a split, craft A′ against the true attributes with the
/// gradient attack, then train a GCN on {X, X_shuffled} × {A, A′} with one
/// shared seed. Drops are clean minus attacked test accuracy per arm.
pub fn paired_effect_probe_on(
    g: &Graph,
    ptb_ratio: f64,
    repeats: usize,
    seed: u64,
    cfg: &TrainConfig,
) -> Result<PairedEffectReport> {
    if repeats == 0 {
        return Err(crate::SfrError::validation("repeats must be at least 1"));
    }
    let mut seeds = Vec::with_capacity(repeats);
    for r in 0..repeats {
        let rs = RngState::new(repeat_seed(seed, r));
        let wrap = |e: crate::SfrError| {
            e.in_trial(format!("paired-effect repeat {r}, seed {}", rs.seed()))
        };
        let split = make_split(g.num_nodes(), 0.1, 0.1, rs.derive("split").seed()).map_err(wrap)?;
        let matched = g.with_splits(split).map_err(wrap)?;
        let plan =
            sgc_gradient_attack(&matched, ptb_ratio, cfg, rs.derive("attack")).map_err(wrap)?;
        let matched_att = apply_perturbation(&matched, &plan).map_err(wrap)?;
        let x_shuf = degree_preserving_shuffle(&matched, rs.derive("shuffle"));
        let mismatched = Graph {
            features: x_shuf.clone(),
            ..matched.clone()
        };
        let mismatched_att = Graph {
            features: x_shuf,
            ..matched_att.clone()
        };
        let ts = trial_seed(seed, Variant::Gcn, r);
        let clean_matched = gcn_test_pct(&matched, cfg, ts).map_err(wrap)?;
        let attacked_matched = gcn_test_pct(&matched_att, cfg, ts).map_err(wrap)?;
        let clean_mismatched = gcn_test_pct(&mismatched, cfg, ts).map_err(wrap)?;
        let attacked_mismatched = gcn_test_pct(&mismatched_att, cfg, ts).map_err(wrap)?;
        seeds.push(PairedSeed {
            repeat: r,
            seed: ts,
            flips: plan.flips.len(),
            clean_matched,
            attacked_matched,
            clean_mismatched,
            attacked_mismatched,
            drop_matched: clean_matched - attacked_matched,
            drop_mismatched: clean_mismatched - attacked_mismatched,
        });
    }
    let dm: Vec<f64> = seeds.iter().map(|s| s.drop_matched).collect();
    let dx: Vec<f64> = seeds.iter().map(|s| s.drop_mismatched).collect();
    let (median_drop_matched, median_drop_mismatched) = (stats::median(&dm), stats::median(&dx));
    let difference = median_drop_matched - median_drop_mismatched;
    Ok(PairedEffectReport {
        dataset: g.name.clone(),
        ptb_ratio,
        repeats,
        base_seed: seed,
        seeds,
        median_drop_matched,
        median_drop_mismatched,
        difference,
        verdict: Verdict::from_difference(difference),
    })
}
