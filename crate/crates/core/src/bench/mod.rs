//! Seeded experiments: attack generation, multi-seed training, aggregation,
//! reports, timing and the paired-effect probe.

mod probe;
mod report;
pub mod stats;
mod timing;

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::attacks::{
    apply_perturbation, generate_plan, perturbation_stats, AttackMethod, PerturbationPlan,
    PerturbationStats,
};
use crate::error::{Result, SfrError};
use crate::graph::{graph_stats, load_graph, make_split, Graph, SplitMasks};
use crate::numeric::{CsrMatrix, Precision, Real};
use crate::rng::{combine_seed, RngState};
use crate::trainer::{predict, train, MaskAccuracy, Stage, TrainConfig, TrainHistory, Variant};

pub use probe::{
    degree_preserving_shuffle, paired_effect_probe, paired_effect_probe_on, PairedEffectReport,
    PairedSeed, Verdict, INCONCLUSIVE_BAND,
};
pub use report::{emit_report, render_report, ReportFormat};
pub use timing::{bench_timing, bench_timing_on, TimingEntry, TimingReport, WARMUP_EPOCHS};

pub const THREADS_ENV: &str = "SFR_THREADS";
pub const PRECISION_ENV: &str = "SFR_PRECISION";

/// Which perturbation each repeat trains on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttackSpec {
    None,
    Random,
    Dice,
    Grad,
    /// A fixed `plan.tsv`, applied identically in every repeat.
    External(PathBuf),
}

impl AttackSpec {
    pub fn name(&self) -> &'static str {
        match self {
            AttackSpec::None => "none",
            AttackSpec::Random => "random",
            AttackSpec::Dice => "dice",
            AttackSpec::Grad => "grad",
            AttackSpec::External(_) => "external",
        }
    }

    fn method(&self) -> Option<AttackMethod> {
        match self {
            AttackSpec::Random => Some(AttackMethod::Random),
            AttackSpec::Dice => Some(AttackMethod::Dice),
            AttackSpec::Grad => Some(AttackMethod::Grad),
            _ => None,
        }
    }

    /// Parses `none|random|dice|grad|external`; `external` needs `plan`.
    pub fn parse(name: &str, plan: Option<&Path>) -> Result<Self> {
        match name.to_ascii_lowercase().as_str() {
            "none" => Ok(AttackSpec::None),
            "random" => Ok(AttackSpec::Random),
            "dice" => Ok(AttackSpec::Dice),
            "grad" => Ok(AttackSpec::Grad),
            "external" => plan
                .map(|p| AttackSpec::External(p.to_path_buf()))
                .ok_or_else(|| SfrError::validation("--attack external requires --plan FILE")),
            other => Err(SfrError::validation(format!("unknown attack '{other}'"))),
        }
    }
}

impl fmt::Display for AttackSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SplitMode {
    /// A fresh random split per repeat, seeded by the repeat seed.
    PerRepeat { train_ratio: f64, val_ratio: f64 },
    /// The dataset's own split in every repeat.
    Fixed,
}

impl Default for SplitMode {
    fn default() -> Self {
        SplitMode::PerRepeat {
            train_ratio: 0.1,
            val_ratio: 0.1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub dataset: PathBuf,
    pub attack: AttackSpec,
    /// Required for generated attacks, forbidden without an attack, optional
    /// for external plans (whose own size is reported per trial).
    pub ptb_ratio: Option<f64>,
    pub variants: Vec<Variant>,
    pub repeats: usize,
    pub base_seed: u64,
    pub train: TrainConfig,
    pub split: SplitMode,
    pub precision: Precision,
    /// Trial-level parallelism cap; `None` uses every core.
    pub threads: Option<usize>,
    /// Kernels always run with a fixed reduction order; recorded in reports.
    pub deterministic: bool,
    pub output: Option<PathBuf>,
    pub format: ReportFormat,
}

impl ExperimentSpec {
    pub fn new(dataset: impl Into<PathBuf>, variants: Vec<Variant>) -> Self {
        ExperimentSpec {
            dataset: dataset.into(),
            attack: AttackSpec::None,
            ptb_ratio: None,
            variants,
            repeats: 10,
            base_seed: 0,
            train: TrainConfig::default(),
            split: SplitMode::default(),
            precision: Precision::F32,
            threads: None,
            deterministic: true,
            output: None,
            format: ReportFormat::Json,
        }
    }

    /// Applies `SFR_THREADS` and `SFR_PRECISION` when set.
    pub fn with_env(mut self) -> Result<Self> {
        if let Ok(t) = std::env::var(THREADS_ENV) {
            self.threads = Some(t.parse().map_err(|_| {
                SfrError::validation(format!(
                    "{THREADS_ENV} must be a positive integer, got '{t}'"
                ))
            })?);
        }
        if let Ok(p) = std::env::var(PRECISION_ENV) {
            self.precision = p.parse()?;
        }
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.repeats == 0 {
            return Err(SfrError::validation("repeats must be at least 1"));
        }
        if self.variants.is_empty() {
            return Err(SfrError::validation("at least one variant is required"));
        }
        match (&self.attack, self.ptb_ratio) {
            (AttackSpec::None, Some(_)) => {
                return Err(SfrError::validation(
                    "--ptb is only valid together with an attack",
                ));
            }
            (AttackSpec::None, None) | (AttackSpec::External(_), None) => {}
            (_, None) => {
                return Err(SfrError::validation(format!(
                    "attack '{}' requires --ptb",
                    self.attack
                )))
            }
            (_, Some(p)) if !(0.0..=0.5).contains(&p) => {
                return Err(SfrError::validation(format!(
                    "ptb must be in [0, 0.5], got {p}"
                )));
            }
            _ => {}
        }
        if self.threads == Some(0) {
            return Err(SfrError::validation("threads must be at least 1"));
        }
        self.train.validate()
    }
}

/// Seed of everything shared by the variants of one repeat (split, attack).
pub fn repeat_seed(base: u64, repeat: usize) -> u64 {
    combine_seed(base, "repeat", repeat as u64)
}

/// Seed of one (variant, repeat) training run. Independent of the number of
/// repeats, so growing an experiment never changes earlier trials.
pub fn trial_seed(base: u64, variant: Variant, repeat: usize) -> u64 {
    combine_seed(base, variant.as_str(), repeat as u64)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub variant: Variant,
    pub repeat: usize,
    pub seed: u64,
    pub clean: MaskAccuracy,
    /// Equal to `clean` when there is no attack.
    pub attacked: MaskAccuracy,
    pub perturbation: Option<PerturbationStats>,
    /// Losses and per-epoch wall times of the run on the attacked graph.
    pub history: TrainHistory,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VariantAggregate {
    pub variant: Variant,
    pub count: usize,
    /// Test accuracy in percentage points; population standard deviation.
    pub clean_mean: f64,
    pub clean_std: f64,
    pub attacked_mean: f64,
    pub attacked_std: f64,
    /// Median wall time per epoch by stage, in milliseconds.
    pub ms_per_epoch: BTreeMap<String, f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub dataset: String,
    pub num_nodes: usize,
    pub num_edges: usize,
    pub attack: String,
    pub ptb_ratio: Option<f64>,
    pub repeats: usize,
    pub base_seed: u64,
    pub precision: Precision,
    pub threads: Option<usize>,
    pub deterministic: bool,
    pub std: String,
    pub timestamp_unix: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub metadata: ReportMetadata,
    pub config: TrainConfig,
    pub variants: Vec<Variant>,
    pub trials: Vec<TrialRecord>,
    pub aggregates: Vec<VariantAggregate>,
}

pub(crate) fn stage_name(s: Stage) -> &'static str {
    match s {
        Stage::Pretrain => "pretrain",
        Stage::Finetune => "finetune",
        Stage::Train => "train",
    }
}

/// Aggregates per variant, in `variants` order.
pub fn aggregate(variants: &[Variant], trials: &[TrialRecord]) -> Vec<VariantAggregate> {
    variants
        .iter()
        .map(|&v| {
            let rows: Vec<&TrialRecord> = trials.iter().filter(|t| t.variant == v).collect();
            let clean: Vec<f64> = rows.iter().map(|t| t.clean.test * 100.0).collect();
            let attacked: Vec<f64> = rows.iter().map(|t| t.attacked.test * 100.0).collect();
            let mut by_stage: BTreeMap<String, Vec<f64>> = BTreeMap::new();
            for t in &rows {
                for e in &t.history.epochs {
                    by_stage
                        .entry(stage_name(e.stage).to_string())
                        .or_default()
                        .push(e.millis);
                }
            }
            VariantAggregate {
                variant: v,
                count: rows.len(),
                clean_mean: stats::mean(&clean),
                clean_std: stats::population_std(&clean),
                attacked_mean: stats::mean(&attacked),
                attacked_std: stats::population_std(&attacked),
                ms_per_epoch: by_stage
                    .into_iter()
                    .map(|(k, xs)| (k, stats::median(&xs)))
                    .collect(),
            }
        })
        .collect()
}

impl MetricsReport {
    /// Aggregates must equal a recomputation from the per-trial rows, with
    /// exactly `repeats` rows per variant.
    pub fn check_consistency(&self) -> Result<()> {
        for a in &self.aggregates {
            if a.count != self.metadata.repeats {
                return Err(SfrError::validation(format!(
                    "variant {} aggregates {} trials, expected {}",
                    a.variant, a.count, self.metadata.repeats
                )));
            }
        }
        let fresh = aggregate(&self.variants, &self.trials);
        let same = fresh.len() == self.aggregates.len()
            && fresh.iter().zip(&self.aggregates).all(|(a, b)| {
                let eq = |x: f64, y: f64| {
                    x.to_bits() == y.to_bits() || (x - y).abs() <= 1e-9 * x.abs().max(1.0)
                };
                a.variant == b.variant
                    && a.count == b.count
                    && eq(a.clean_mean, b.clean_mean)
                    && eq(a.clean_std, b.clean_std)
                    && eq(a.attacked_mean, b.attacked_mean)
                    && eq(a.attacked_std, b.attacked_std)
                    && a.ms_per_epoch.len() == b.ms_per_epoch.len()
                    && a.ms_per_epoch
                        .iter()
                        .zip(&b.ms_per_epoch)
                        .all(|(x, y)| x.0 == y.0 && eq(*x.1, *y.1))
            });
        if !same {
            return Err(SfrError::validation(
                "report aggregates disagree with the per-trial rows",
            ));
        }
        Ok(())
    }

    pub fn aggregate_for(&self, v: Variant) -> Option<&VariantAggregate> {
        self.aggregates.iter().find(|a| a.variant == v)
    }
}

/// Per-repeat state shared by every variant.
struct RepeatSetup {
    splits: SplitMasks,
    attacked: Option<CsrMatrix<f64>>,
    stats: Option<PerturbationStats>,
}

pub(crate) fn thread_pool(threads: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        b = b.num_threads(t);
    }
    b.build()
        .map_err(|e| SfrError::validation(format!("cannot build thread pool: {e}")))
}

/// Loads the dataset and runs [`run_experiment_on`].
pub fn run_experiment(spec: &ExperimentSpec) -> Result<MetricsReport> {
    spec.validate()?;
    let g = load_graph(&spec.dataset)?;
    run_experiment_on(&g, spec)
}

fn setup_repeat(
    g: &Graph,
    spec: &ExperimentSpec,
    repeat: usize,
    external: Option<&PerturbationPlan>,
) -> Result<RepeatSetup> {
    let rs = repeat_seed(spec.base_seed, repeat);
    let splits = match spec.split {
        SplitMode::PerRepeat {
            train_ratio,
            val_ratio,
        } => make_split(
            g.num_nodes(),
            train_ratio,
            val_ratio,
            RngState::new(rs).derive("split").seed(),
        )?,
        SplitMode::Fixed => g.splits.clone(),
    };
    let g = g.with_splits(splits.clone())?;
    let plan = match (&spec.attack, external) {
        (_, Some(plan)) => Some(plan.clone()),
        (a, None) => match a.method() {
            Some(m) => Some(generate_plan(
                m,
                &g,
                spec.ptb_ratio.unwrap_or(0.0),
                &spec.train,
                RngState::new(rs).derive("attack"),
            )?),
            None => None,
        },
    };
    let (attacked, stats) = match plan {
        Some(p) => {
            let h = apply_perturbation(&g, &p)?;
            let s = perturbation_stats(&g, &h)?;
            // An empty plan leaves the graph untouched; the clean run is reused.
            (
                if p.is_empty() {
                    None
                } else {
                    Some(h.adjacency)
                },
                Some(s),
            )
        }
        None => (None, None),
    };
    Ok(RepeatSetup {
        splits,
        attacked,
        stats,
    })
}

fn run_trial<T: Real>(
    g: &Graph,
    spec: &ExperimentSpec,
    setup: &RepeatSetup,
    v: Variant,
    repeat: usize,
) -> Result<TrialRecord> {
    let seed = trial_seed(spec.base_seed, v, repeat);
    let rng = RngState::new(seed);
    let clean_g = g.with_splits(setup.splits.clone())?;
    let clean_model = train::<T>(&clean_g, &spec.train, v, rng)?;
    let clean = predict(&clean_model, &clean_g)?.accuracy;
    let (attacked, history) = match &setup.attacked {
        None => (clean, clean_model.history),
        Some(adj) => {
            let att_g = Graph {
                adjacency: adj.clone(),
                ..clean_g
            };
            let m = train::<T>(&att_g, &spec.train, v, rng)?;
            (predict(&m, &att_g)?.accuracy, m.history)
        }
    };
    Ok(TrialRecord {
        variant: v,
        repeat,
        seed,
        clean,
        attacked,
        perturbation: setup.stats,
        history,
    })
}

/// Runs every (variant, repeat) trial on an in-memory graph.
///
/// Each repeat draws its split and perturbation once from the repeat seed;
/// each trial trains from its own seed. Trials run concurrently on up to
/// `spec.threads` threads. Errors carry the (variant, repeat, seed) context.
pub fn run_experiment_on(g: &Graph, spec: &ExperimentSpec) -> Result<MetricsReport> {
    spec.validate()?;
    let external = match &spec.attack {
        AttackSpec::External(path) => Some(PerturbationPlan::read(path)?),
        _ => None,
    };
    let pool = thread_pool(spec.threads)?;
    let (setups, trials) = pool.install(|| -> Result<_> {
        let setups: Vec<RepeatSetup> = (0..spec.repeats)
            .into_par_iter()
            .map(|r| {
                setup_repeat(g, spec, r, external.as_ref()).map_err(|e| {
                    e.in_trial(format!(
                        "repeat {r} (seed {})",
                        repeat_seed(spec.base_seed, r)
                    ))
                })
            })
            .collect::<Result<_>>()?;
        let jobs: Vec<(usize, Variant)> = (0..spec.repeats)
            .flat_map(|r| spec.variants.iter().map(move |&v| (r, v)))
            .collect();
        let trials: Vec<TrialRecord> = jobs
            .par_iter()
            .map(|&(r, v)| {
                let out = match spec.precision {
                    Precision::F32 => run_trial::<f32>(g, spec, &setups[r], v, r),
                    Precision::F64 => run_trial::<f64>(g, spec, &setups[r], v, r),
                };
                out.map_err(|e| {
                    e.in_trial(format!(
                        "variant {v}, repeat {r}, seed {}",
                        trial_seed(spec.base_seed, v, r)
                    ))
                })
            })
            .collect::<Result<_>>()?;
        Ok((setups, trials))
    })?;
    drop(setups);

    let stats = graph_stats(g);
    let report = MetricsReport {
        metadata: ReportMetadata {
            dataset: g.name.clone(),
            num_nodes: stats.num_nodes,
            num_edges: stats.num_edges,
            attack: spec.attack.name().to_string(),
            ptb_ratio: spec.ptb_ratio,
            repeats: spec.repeats,
            base_seed: spec.base_seed,
            precision: spec.precision,
            threads: spec.threads,
            deterministic: spec.deterministic,
            std: "population".into(),
            timestamp_unix: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        },
        config: spec.train.clone(),
        variants: spec.variants.clone(),
        aggregates: aggregate(&spec.variants, &trials),
        trials,
    };
    report.check_consistency()?;
    Ok(report)
}
