use sfr_core::bench::{
    emit_report, repeat_seed, run_experiment, run_experiment_on, trial_seed, AttackSpec,
    ExperimentSpec, MetricsReport, ReportFormat,
};
use sfr_core::graph::synth::{sbm, SbmConfig};
use sfr_core::graph::{write_graph, Graph};
use sfr_core::numeric::Precision;
use sfr_core::trainer::Variant;
use sfr_core::RngState;

fn toy() -> Graph {
    sbm(&SbmConfig::new(60, 3, 0.2, 0.02), RngState::new(6)).unwrap()
}

fn spec(variants: Vec<Variant>, repeats: usize) -> ExperimentSpec {
    let mut s = ExperimentSpec::new("unused", variants);
    s.repeats = repeats;
    s.train.pretrain_epochs = 15;
    s.train.finetune_epochs = 4;
    s
}

fn accuracies(r: &MetricsReport) -> Vec<(Variant, usize, u64, u64)> {
    r.trials
        .iter()
        .map(|t| {
            (
                t.variant,
                t.repeat,
                t.clean.test.to_bits(),
                t.attacked.test.to_bits(),
            )
        })
        .collect()
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let g = toy();
    let mut s = spec(vec![Variant::Sfr, Variant::Gcn, Variant::SfrRan], 3);
    s.attack = AttackSpec::Random;
    s.ptb_ratio = Some(0.1);
    s.threads = Some(1);
    let a = run_experiment_on(&g, &s).unwrap();
    s.threads = Some(4);
    let b = run_experiment_on(&g, &s).unwrap();
    assert_eq!(accuracies(&a), accuracies(&b));
}

#[test]
fn growing_repeats_keeps_earlier_trials() {
    let g = toy();
    let a = run_experiment_on(&g, &spec(vec![Variant::Gcn], 2)).unwrap();
    let b = run_experiment_on(&g, &spec(vec![Variant::Gcn], 4)).unwrap();
    assert_eq!(accuracies(&a)[..], accuracies(&b)[..2]);
    assert_ne!(repeat_seed(0, 1), repeat_seed(0, 2));
    assert_ne!(
        trial_seed(0, Variant::Sfr, 0),
        trial_seed(1, Variant::Sfr, 0)
    );
}

#[test]
fn reports_are_emitted_in_every_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("g");
    write_graph(&toy(), &data).unwrap();
    let mut s = spec(vec![Variant::Sfr, Variant::Mlp], 3);
    s.dataset = data;
    s.attack = AttackSpec::Dice;
    s.ptb_ratio = Some(0.05);
    s.precision = Precision::F64;
    let r = run_experiment(&s).unwrap();
    assert_eq!(r.metadata.std, "population");

    let json = dir.path().join("r.json");
    emit_report(&r, ReportFormat::Json, Some(&json)).unwrap();
    let text = std::fs::read_to_string(&json).unwrap();
    let back: MetricsReport = serde_json::from_str(&text).unwrap();
    assert_eq!(back, r);

    let csv = dir.path().join("r.csv");
    emit_report(&r, ReportFormat::Csv, Some(&csv)).unwrap();
    let lines = std::fs::read_to_string(&csv).unwrap().lines().count();
    assert_eq!(lines, 2 * 3 + 1);

    let md = dir.path().join("r.md");
    emit_report(&r, ReportFormat::Md, Some(&md)).unwrap();
    let table = std::fs::read_to_string(&md).unwrap();
    let a = r.aggregate_for(Variant::Sfr).unwrap();
    assert!(table.contains(&format!("{:.1}±{:.1}", a.attacked_mean, a.attacked_std)));

    let bad = dir.path().join("missing").join("r.json");
    let err = emit_report(&r, ReportFormat::Json, Some(&bad)).unwrap_err();
    assert_eq!(err.exit_code(), 1);
}

#[test]
fn external_plans_are_applied_in_every_repeat() {
    let g = toy();
    let plan = sfr_core::attacks::dice_attack(&g, 0.2, RngState::new(3)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.tsv");
    plan.write(&path).unwrap();
    let mut s = spec(vec![Variant::Gcn], 2);
    s.attack = AttackSpec::External(path);
    s.split = sfr_core::bench::SplitMode::Fixed;
    let r = run_experiment_on(&g, &s).unwrap();
    for t in &r.trials {
        let p = t.perturbation.unwrap();
        assert_eq!((p.added, p.removed), plan.counts());
    }
}

#[test]
fn std_is_over_exactly_the_repeats() {
    let r = run_experiment_on(&toy(), &spec(vec![Variant::Mlp], 4)).unwrap();
    let xs: Vec<f64> = r.trials.iter().map(|t| t.clean.test * 100.0).collect();
    let mean = xs.iter().sum::<f64>() / 4.0;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / 4.0;
    let a = &r.aggregates[0];
    assert_eq!(a.count, 4);
    assert!((a.clean_mean - mean).abs() < 1e-9);
    assert!((a.clean_std - var.sqrt()).abs() < 1e-9);
}
