//! Structural poisoning attacks under an undirected edge-flip budget.
//!
//! Attacks only ever read training labels.

mod gradient;

use std::collections::HashSet;
use std::fmt::Write as _;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Result, SfrError};
use crate::graph::{graph_stats, Graph};
use crate::rng::RngState;
use crate::trainer::TrainConfig;

pub use gradient::{
    greedy_flips, sgc_gradient_attack, SgcSurrogate, DEFAULT_SHORTLIST, DENSE_NODE_CAP,
};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FlipAction {
    Add,
    Remove,
}

impl FlipAction {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlipAction::Add => "add",
            FlipAction::Remove => "remove",
        }
    }

    pub fn inverse(&self) -> FlipAction {
        match self {
            FlipAction::Add => FlipAction::Remove,
            FlipAction::Remove => FlipAction::Add,
        }
    }
}

/// One undirected edge toggle, stored with `u < v`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Flip {
    pub u: usize,
    pub v: usize,
    pub action: FlipAction,
}

impl Flip {
    pub fn new(a: usize, b: usize, action: FlipAction) -> Self {
        Flip {
            u: a.min(b),
            v: a.max(b),
            action,
        }
    }

    pub fn pair(&self) -> (usize, usize) {
        (self.u, self.v)
    }
}

/// Ordered edge flips with their budget.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationPlan {
    pub flips: Vec<Flip>,
    pub budget: usize,
    pub ptb_ratio: f64,
}

impl PerturbationPlan {
    pub fn empty(ptb_ratio: f64) -> Self {
        PerturbationPlan {
            flips: Vec::new(),
            budget: 0,
            ptb_ratio,
        }
    }

    pub fn len(&self) -> usize {
        self.flips.len()
    }

    pub fn is_empty(&self) -> bool {
        self.flips.is_empty()
    }

    /// `(added, removed)`.
    pub fn counts(&self) -> (usize, usize) {
        let added = self
            .flips
            .iter()
            .filter(|f| f.action == FlipAction::Add)
            .count();
        (added, self.flips.len() - added)
    }

    /// Plan undoing this one when applied to the perturbed graph.
    pub fn inverse(&self) -> PerturbationPlan {
        PerturbationPlan {
            flips: self
                .flips
                .iter()
                .rev()
                .map(|f| Flip::new(f.u, f.v, f.action.inverse()))
                .collect(),
            ..self.clone()
        }
    }

    /// Checks the plan invariants against the clean graph.
    pub fn validate(&self, g: &Graph) -> Result<()> {
        if self.flips.len() > self.budget {
            return Err(SfrError::validation(format!(
                "plan has {} flips but a budget of {}",
                self.flips.len(),
                self.budget
            )));
        }
        let n = g.num_nodes();
        let mut seen = HashSet::new();
        for f in &self.flips {
            if f.u >= n || f.v >= n {
                return Err(SfrError::validation(format!(
                    "flip ({}, {}) out of range for {n} nodes",
                    f.u, f.v
                )));
            }
            if f.u == f.v {
                return Err(SfrError::validation(format!(
                    "self-pair flip on node {}",
                    f.u
                )));
            }
            if !seen.insert(f.pair()) {
                return Err(SfrError::validation(format!(
                    "pair ({}, {}) flipped twice",
                    f.u, f.v
                )));
            }
            let exists = g.has_edge(f.u, f.v);
            match f.action {
                FlipAction::Remove if !exists => {
                    return Err(SfrError::validation(format!(
                        "cannot remove absent edge ({}, {})",
                        f.u, f.v
                    )));
                }
                FlipAction::Add if exists => {
                    return Err(SfrError::validation(format!(
                        "cannot add existing edge ({}, {})",
                        f.u, f.v
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = format!("# budget={} ptb={}\n", self.budget, self.ptb_ratio);
        for f in &self.flips {
            writeln!(s, "{}\t{}\t{}", f.action.as_str(), f.u, f.v).unwrap();
        }
        s
    }

    /// Parses the `plan.tsv` format. The `# budget=<int> ptb=<float>` header
    /// is required.
    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut header = None;
        let mut flips = Vec::new();
        for (ln, line) in text.lines().enumerate().map(|(i, l)| (i + 1, l.trim())) {
            if line.is_empty() {
                continue;
            }
            if let Some(rest) = line.strip_prefix('#') {
                if header.is_none() && rest.contains("budget=") {
                    header = Some(parse_header(rest, ln)?);
                }
                continue;
            }
            let parts: Vec<&str> = line.split_whitespace().collect();
            let [action, u, v] = parts[..] else {
                return Err(SfrError::validation(format!(
                    "plan line {ln}: expected '<action>\\t<u>\\t<v>'"
                )));
            };
            let action = match action {
                "add" => FlipAction::Add,
                "remove" => FlipAction::Remove,
                other => {
                    return Err(SfrError::validation(format!(
                        "plan line {ln}: unknown action '{other}'"
                    )))
                }
            };
            let id = |t: &str| {
                t.parse::<usize>().map_err(|_| {
                    SfrError::validation(format!("plan line {ln}: '{t}' is not a node id"))
                })
            };
            flips.push(Flip::new(id(u)?, id(v)?, action));
        }
        let (budget, ptb_ratio) = header.ok_or_else(|| {
            SfrError::validation("plan is missing the '# budget=<int> ptb=<float>' header")
        })?;
        Ok(PerturbationPlan {
            flips,
            budget,
            ptb_ratio,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_tsv()).map_err(|e| SfrError::io(path, e))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| SfrError::io(path, e))?;
        Self::parse_tsv(&text)
    }
}

fn parse_header(rest: &str, ln: usize) -> Result<(usize, f64)> {
    let (mut budget, mut ptb) = (None, None);
    for tok in rest.split_whitespace() {
        if let Some(b) = tok.strip_prefix("budget=") {
            budget = b.parse::<usize>().ok();
        } else if let Some(p) = tok.strip_prefix("ptb=") {
            ptb = p.parse::<f64>().ok();
        }
    }
    match (budget, ptb) {
        (Some(b), Some(p)) => Ok((b, p)),
        _ => Err(SfrError::validation(format!(
            "plan line {ln}: malformed header"
        ))),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackMethod {
    Random,
    Dice,
    Grad,
}

impl AttackMethod {
    pub fn as_str(&self) -> &'static str {
        match self {
            AttackMethod::Random => "random",
            AttackMethod::Dice => "dice",
            AttackMethod::Grad => "grad",
        }
    }
}

impl FromStr for AttackMethod {
    type Err = SfrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "random" => Ok(AttackMethod::Random),
            "dice" => Ok(AttackMethod::Dice),
            "grad" => Ok(AttackMethod::Grad),
            other => Err(SfrError::validation(format!(
                "unknown attack method '{other}' (expected random, dice or grad)"
            ))),
        }
    }
}

pub fn generate_plan(
    method: AttackMethod,
    g: &Graph,
    ptb_ratio: f64,
    cfg: &TrainConfig,
    rng: RngState,
) -> Result<PerturbationPlan> {
    match method {
        AttackMethod::Random => random_flip_attack(g, ptb_ratio, rng),
        AttackMethod::Dice => dice_attack(g, ptb_ratio, rng),
        AttackMethod::Grad => sgc_gradient_attack(g, ptb_ratio, cfg, rng),
    }
}

/// `round(ptb_ratio · E)` after checking `0 ≤ ptb_ratio ≤ 0.5`.
pub fn budget_for(g: &Graph, ptb_ratio: f64) -> Result<usize> {
    if !(0.0..=0.5).contains(&ptb_ratio) {
        return Err(SfrError::validation(format!(
            "ptb ratio must be in [0, 0.5], got {ptb_ratio}"
        )));
    }
    Ok((ptb_ratio * g.num_edges() as f64).round() as usize)
}

fn total_pairs(n: usize) -> usize {
    n * n.saturating_sub(1) / 2
}

fn random_pair<R: Rng>(r: &mut R, n: usize) -> (usize, usize) {
    loop {
        let (a, b) = (r.gen_range(0..n), r.gen_range(0..n));
        if a != b {
            return (a.min(b), a.max(b));
        }
    }
}

/// Toggles `budget` distinct uniformly random node pairs.
pub fn random_flip_attack(g: &Graph, ptb_ratio: f64, rng: RngState) -> Result<PerturbationPlan> {
    let budget = budget_for(g, ptb_ratio)?;
    let n = g.num_nodes();
    if budget > total_pairs(n) {
        return Err(SfrError::validation(format!(
            "budget {budget} exceeds the {} available node pairs",
            total_pairs(n)
        )));
    }
    let mut r = rng.rng();
    let mut used = HashSet::new();
    let mut flips = Vec::with_capacity(budget);
    while flips.len() < budget {
        let (u, v) = random_pair(&mut r, n);
        if used.insert((u, v)) {
            let action = if g.has_edge(u, v) {
                FlipAction::Remove
            } else {
                FlipAction::Add
            };
            flips.push(Flip::new(u, v, action));
        }
    }
    Ok(PerturbationPlan {
        flips,
        budget,
        ptb_ratio,
    })
}

/// "Delete internally, connect externally" over training labels.
///
/// Half the budget removes edges joining two same-class training nodes, the
/// rest adds non-edges joining two different-class training nodes. Unused
/// removal budget moves to additions; exhausted pools fall back to random
/// flips. With fewer than two training classes the plan is random additions.
pub fn dice_attack(g: &Graph, ptb_ratio: f64, rng: RngState) -> Result<PerturbationPlan> {
    let budget = budget_for(g, ptb_ratio)?;
    let n = g.num_nodes();
    let train = g.splits.train_indices();
    let classes: HashSet<usize> = train.iter().map(|&v| g.labels[v]).collect();
    let mut r = rng.rng();
    let mut used = HashSet::new();
    let mut flips = Vec::with_capacity(budget);

    if classes.len() >= 2 {
        let is_train = &g.splits.train;
        let mut removals: Vec<(usize, usize)> = g
            .edges()
            .into_iter()
            .filter(|&(u, v)| is_train[u] && is_train[v] && g.labels[u] == g.labels[v])
            .collect();
        removals.shuffle(&mut r);
        let n_remove = (budget / 2).min(removals.len());
        for &(u, v) in &removals[..n_remove] {
            used.insert((u, v));
            flips.push(Flip::new(u, v, FlipAction::Remove));
        }

        let mut additions = Vec::new();
        for (a, &u) in train.iter().enumerate() {
            for &v in &train[a + 1..] {
                if g.labels[u] != g.labels[v] && !g.has_edge(u, v) {
                    additions.push((u.min(v), u.max(v)));
                }
            }
        }
        additions.shuffle(&mut r);
        let n_add = (budget - flips.len()).min(additions.len());
        for &(u, v) in &additions[..n_add] {
            used.insert((u, v));
            flips.push(Flip::new(u, v, FlipAction::Add));
        }
    }

    let non_edges = total_pairs(n) - g.num_edges();
    let additions_only = classes.len() < 2;
    let available = if additions_only {
        non_edges
    } else {
        total_pairs(n)
    } - used.len();
    let remaining = (budget - flips.len()).min(available);
    let target = flips.len() + remaining;
    while flips.len() < target {
        let (u, v) = random_pair(&mut r, n);
        let exists = g.has_edge(u, v);
        if (additions_only && exists) || !used.insert((u, v)) {
            continue;
        }
        let action = if exists {
            FlipAction::Remove
        } else {
            FlipAction::Add
        };
        flips.push(Flip::new(u, v, action));
    }
    Ok(PerturbationPlan {
        flips,
        budget,
        ptb_ratio,
    })
}

/// Applies a validated plan; attributes, labels and splits are unchanged.
pub fn apply_perturbation(g: &Graph, plan: &PerturbationPlan) -> Result<Graph> {
    plan.validate(g)?;
    if plan.is_empty() {
        return Ok(g.clone());
    }
    let mut edges: HashSet<(usize, usize)> = g.edges().into_iter().collect();
    for f in &plan.flips {
        match f.action {
            FlipAction::Add => edges.insert(f.pair()),
            FlipAction::Remove => edges.remove(&f.pair()),
        };
    }
    let mut edges: Vec<_> = edges.into_iter().collect();
    edges.sort_unstable();
    g.with_edges(&edges)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PerturbationStats {
    pub added: usize,
    pub removed: usize,
    /// `(added + removed) / E_clean`; 0 for two edgeless graphs, infinite
    /// when edges were added to an edgeless graph.
    pub ptb_ratio: f64,
    /// Homophily of the perturbed graph minus that of the clean graph.
    pub homophily_delta: f64,
}

pub fn perturbation_stats(clean: &Graph, perturbed: &Graph) -> Result<PerturbationStats> {
    if clean.num_nodes() != perturbed.num_nodes() {
        return Err(SfrError::validation(format!(
            "graphs have {} and {} nodes",
            clean.num_nodes(),
            perturbed.num_nodes()
        )));
    }
    let a: HashSet<_> = clean.edges().into_iter().collect();
    let b: HashSet<_> = perturbed.edges().into_iter().collect();
    let added = b.difference(&a).count();
    let removed = a.difference(&b).count();
    let changed = added + removed;
    let ptb_ratio = match (changed, a.len()) {
        (0, _) => 0.0,
        (_, 0) => f64::INFINITY,
        (c, e) => c as f64 / e as f64,
    };
    Ok(PerturbationStats {
        added,
        removed,
        ptb_ratio,
        homophily_delta: graph_stats(perturbed).homophily_ratio
            - graph_stats(clean).homophily_ratio,
    })
}
