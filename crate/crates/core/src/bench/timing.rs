use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{stage_name, stats, thread_pool, trial_seed};
use crate::error::Result;
use crate::graph::{load_graph, Graph};
use crate::numeric::Precision;
use crate::rng::RngState;
use crate::trainer::{train, TrainConfig, Variant};

/// Epochs discarded at the start of every stage of every run.
pub const WARMUP_EPOCHS: usize = 5;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingEntry {
    pub variant: Variant,
    pub stage: String,
    pub samples: usize,
    pub median_ms: f64,
    pub iqr_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub dataset: String,
    pub repeats: usize,
    pub precision: Precision,
    pub warmup_epochs: usize,
    pub entries: Vec<TimingEntry>,
}

impl TimingReport {
    pub fn entry(&self, variant: Variant, stage: &str) -> Option<&TimingEntry> {
        self.entries
            .iter()
            .find(|e| e.variant == variant && e.stage == stage)
    }
}

/// Loads the dataset and times each variant with default hyper-parameters.
pub fn bench_timing(dataset: &Path, variants: &[Variant], repeats: usize) -> Result<TimingReport> {
    let g = load_graph(dataset)?;
    bench_timing_on(
        &g,
        variants,
        repeats,
        &TrainConfig::default(),
        Precision::F32,
        0,
    )
}

/// Trains every variant `repeats` times, one run at a time on one thread,
/// and summarizes per-epoch wall time by stage after dropping warm-up epochs.
/// Stages with no post-warm-up epochs are omitted.
pub fn bench_timing_on(
    g: &Graph,
    variants: &[Variant],
    repeats: usize,
    cfg: &TrainConfig,
    precision: Precision,
    base_seed: u64,
) -> Result<TimingReport> {
    let pool = thread_pool(Some(1))?;
    let mut entries = Vec::new();
    for &v in variants {
        let mut by_stage: BTreeMap<&'static str, Vec<f64>> = BTreeMap::new();
        for r in 0..repeats {
            let rng = RngState::new(trial_seed(base_seed, v, r));
            let history = pool.install(|| -> Result<_> {
                Ok(match precision {
                    Precision::F32 => train::<f32>(g, cfg, v, rng)?.history,
                    Precision::F64 => train::<f64>(g, cfg, v, rng)?.history,
                })
            })?;
            let mut seen: BTreeMap<&'static str, usize> = BTreeMap::new();
            for e in &history.epochs {
                let name = stage_name(e.stage);
                let k = seen.entry(name).or_default();
                *k += 1;
                if *k > WARMUP_EPOCHS {
                    by_stage.entry(name).or_default().push(e.millis);
                }
            }
        }
        for (stage, xs) in by_stage {
            entries.push(TimingEntry {
                variant: v,
                stage: stage.to_string(),
                samples: xs.len(),
                median_ms: stats::median(&xs),
                iqr_ms: stats::iqr(&xs),
            });
        }
    }
    Ok(TimingReport {
        dataset: g.name.clone(),
        repeats,
        precision,
        warmup_epochs: WARMUP_EPOCHS,
        entries,
    })
}
