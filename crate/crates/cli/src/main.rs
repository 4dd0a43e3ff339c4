use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use sfr_core::attacks::{apply_perturbation, generate_plan, perturbation_stats, AttackMethod};
use sfr_core::bench::{
    bench_timing_on, emit_report, paired_effect_probe_on, run_experiment, AttackSpec,
    ExperimentSpec, SplitMode, PRECISION_ENV, THREADS_ENV,
};
use sfr_core::graph::synth::{sbm, SbmConfig};
use sfr_core::graph::{load_graph, write_graph};
use sfr_core::numeric::gradcheck::check_gradients;
use sfr_core::numeric::Precision;
use sfr_core::trainer::{TrainConfig, Variant};
use sfr_core::{Result, RngState, SfrError};

#[derive(Parser)]
#[command(
    name = "sfr",
    version,
    about = "Attribute pre-training + structure fine-tuning GNN defense and attack harness"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train variants over seeded repeats, optionally under attack, and emit a report.
    Train(TrainCmd),
    /// Generate a perturbation plan.
    Attack(AttackCmd),
    /// Measure ms/epoch per variant and stage on one thread.
    Bench(BenchCmd),
    /// Compare accuracy drops under matched vs. degree-shuffled attributes.
    PairedEffect(PairedCmd),
    /// Verify analytic gradients against finite differences.
    CheckGrad(CheckGradCmd),
    /// Write a stochastic-block-model dataset directory.
    Synth(SynthCmd),
}

#[derive(Args)]
struct Hyper {
    #[arg(long)]
    pretrain_epochs: Option<usize>,
    #[arg(long)]
    finetune_epochs: Option<usize>,
    #[arg(long)]
    hidden: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    dropout: Option<f64>,
    #[arg(long)]
    internaa_ratio: Option<f64>,
    #[arg(long)]
    temperature: Option<f64>,
    #[arg(long)]
    jaccard_threshold: Option<f64>,
}

impl Hyper {
    fn config(&self) -> Result<TrainConfig> {
        let mut c = TrainConfig::default();
        if let Some(v) = self.pretrain_epochs {
            c.pretrain_epochs = v;
        }
        if let Some(v) = self.finetune_epochs {
            c.finetune_epochs = v;
        }
        if let Some(v) = self.hidden {
            c.hidden_units = v;
        }
        if let Some(v) = self.lr {
            c.lr = v;
        }
        if let Some(v) = self.dropout {
            c.dropout = v;
        }
        if let Some(v) = self.internaa_ratio {
            c.internaa_subsample_ratio = v;
        }
        if let Some(v) = self.temperature {
            c.temperature = v;
        }
        if let Some(v) = self.jaccard_threshold {
            c.jaccard_threshold = v;
        }
        c.validate()?;
        Ok(c)
    }
}

#[derive(Args)]
struct TrainCmd {
    #[arg(long)]
    dataset: PathBuf,
    /// One or more variants, comma separated.
    #[arg(long, value_delimiter = ',', default_value = "sfr")]
    variant: Vec<String>,
    #[arg(long, default_value = "none")]
    attack: String,
    /// Perturbation plan for `--attack external`.
    #[arg(long)]
    plan: Option<PathBuf>,
    #[arg(long)]
    ptb: Option<f64>,
    #[arg(long, default_value_t = 10)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Use the dataset's own split in every repeat instead of a fresh one.
    #[arg(long)]
    fixed_split: bool,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, default_value = "json")]
    format: String,
    #[arg(long)]
    deterministic: bool,
    #[arg(long, env = THREADS_ENV)]
    threads: Option<usize>,
    #[arg(long, env = PRECISION_ENV, default_value = "f32")]
    precision: String,
}

#[derive(Args)]
struct AttackCmd {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    method: String,
    #[arg(long)]
    ptb: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Surrogate training epochs for `grad`.
    #[arg(long)]
    surrogate_epochs: Option<usize>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchCmd {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "sfr,gcn")]
    variants: Vec<String>,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long, env = PRECISION_ENV, default_value = "f32")]
    precision: String,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct PairedCmd {
    #[arg(long)]
    dataset: PathBuf,
    #[arg(long)]
    ptb: f64,
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    hyper: Hyper,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct CheckGradCmd {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

#[derive(Args)]
struct SynthCmd {
    #[arg(long, default_value_t = 200)]
    nodes: usize,
    #[arg(long, default_value_t = 4)]
    classes: usize,
    #[arg(long, default_value_t = 0.1)]
    p_in: f64,
    #[arg(long, default_value_t = 0.01)]
    p_out: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: PathBuf,
}

fn parse_variants(names: &[String]) -> Result<Vec<Variant>> {
    names.iter().map(|s| s.trim().parse()).collect()
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)
        .map_err(|e| SfrError::validation(format!("json encoding failed: {e}")))?
        + "\n";
    match out {
        Some(p) => std::fs::write(p, text).map_err(|e| SfrError::io(p, e)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn train_cmd(a: TrainCmd) -> Result<()> {
    let mut spec = ExperimentSpec::new(a.dataset, parse_variants(&a.variant)?);
    spec.attack = AttackSpec::parse(&a.attack, a.plan.as_deref())?;
    spec.ptb_ratio = a.ptb;
    spec.repeats = a.repeats;
    spec.base_seed = a.seed;
    spec.train = a.hyper.config()?;
    spec.train.seed = a.seed;
    if a.fixed_split {
        spec.split = SplitMode::Fixed;
    }
    spec.precision = a.precision.parse()?;
    spec.threads = a.threads;
    spec.deterministic = a.deterministic;
    spec.format = a.format.parse()?;
    spec.output = a.out;
    let report = run_experiment(&spec)?;
    for agg in &report.aggregates {
        log::info!(
            "{}: clean {:.1}±{:.1}, attacked {:.1}±{:.1}",
            agg.variant,
            agg.clean_mean,
            agg.clean_std,
            agg.attacked_mean,
            agg.attacked_std
        );
    }
    emit_report(&report, spec.format, spec.output.as_deref())
}

fn attack_cmd(a: AttackCmd) -> Result<()> {
    let method: AttackMethod = a.method.parse()?;
    let g = load_graph(&a.dataset)?;
    let mut cfg = TrainConfig::default();
    if let Some(e) = a.surrogate_epochs {
        cfg.pretrain_epochs = e;
    }
    let plan = generate_plan(
        method,
        &g,
        a.ptb,
        &cfg,
        RngState::new(a.seed).derive("attack"),
    )?;
    let stats = perturbation_stats(&g, &apply_perturbation(&g, &plan)?)?;
    plan.write(&a.out)?;
    eprintln!(
        "{} flips ({} added, {} removed), homophily change {:+.4}",
        plan.flips.len(),
        stats.added,
        stats.removed,
        stats.homophily_delta
    );
    Ok(())
}

fn bench_cmd(a: BenchCmd) -> Result<()> {
    let variants = parse_variants(&a.variants)?;
    let precision: Precision = a.precision.parse()?;
    let g = load_graph(&a.dataset)?;
    let report = bench_timing_on(
        &g,
        &variants,
        a.repeats,
        &a.hyper.config()?,
        precision,
        a.seed,
    )?;
    for e in &report.entries {
        eprintln!(
            "{:<12} {:<9} median {:>8.3} ms/epoch  IQR {:>7.3}  (n={})",
            e.variant, e.stage, e.median_ms, e.iqr_ms, e.samples
        );
    }
    write_json(&report, a.out.as_deref())
}

fn paired_cmd(a: PairedCmd) -> Result<()> {
    let g = load_graph(&a.dataset)?;
    let report = paired_effect_probe_on(&g, a.ptb, a.repeats, a.seed, &a.hyper.config()?)?;
    eprintln!(
        "median drop matched {:.2}, shuffled {:.2}, difference {:+.2} → {:?}",
        report.median_drop_matched,
        report.median_drop_mismatched,
        report.difference,
        report.verdict
    );
    write_json(&report, a.out.as_deref())
}

fn check_grad_cmd(a: CheckGradCmd) -> Result<()> {
    let report = check_gradients(RngState::new(a.seed));
    for c in &report.components {
        println!(
            "{} {:<24} max rel error {:.3e} over {} entries",
            if c.passed { "ok  " } else { "FAIL" },
            c.name,
            c.max_rel_error,
            c.checked
        );
    }
    if report.passed() {
        println!("all gradients within {:.0e}", report.tolerance);
        Ok(())
    } else {
        Err(SfrError::numeric(
            "check-grad",
            format!(
                "max relative error {:.3e} exceeds {:.0e}",
                report.max_rel_error(),
                report.tolerance
            ),
        ))
    }
}

fn synth_cmd(a: SynthCmd) -> Result<()> {
    let cfg = SbmConfig::new(a.nodes, a.classes, a.p_in, a.p_out);
    let g = sbm(&cfg, RngState::new(a.seed))?;
    write_graph(&g, &a.out)?;
    eprintln!(
        "{} nodes, {} edges → {}",
        g.num_nodes(),
        g.num_edges(),
        a.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Train(a) => train_cmd(a),
        Command::Attack(a) => attack_cmd(a),
        Command::Bench(a) => bench_cmd(a),
        Command::PairedEffect(a) => paired_cmd(a),
        Command::CheckGrad(a) => check_grad_cmd(a),
        Command::Synth(a) => synth_cmd(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
