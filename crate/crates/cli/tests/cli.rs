use std::path::Path;
use std::process::{Command, Output};

fn sfr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_sfr"))
        .args(args)
        .env_remove("SFR_THREADS")
        .env_remove("SFR_PRECISION")
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = sfr(args);
    assert!(
        out.status.success(),
        "sfr {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn synth(dir: &Path, nodes: usize) -> String {
    let path = dir.join(format!("sbm{nodes}"));
    let p = path.to_str().unwrap().to_string();
    ok(&[
        "synth",
        "--nodes",
        &nodes.to_string(),
        "--classes",
        "3",
        "--seed",
        "4",
        "--out",
        &p,
    ]);
    p
}

#[test]
fn attack_then_train_on_external_plan() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 90);
    let plan = dir.path().join("plan.tsv");
    let plan = plan.to_str().unwrap();
    ok(&[
        "attack",
        "--dataset",
        &data,
        "--method",
        "grad",
        "--ptb",
        "0.1",
        "--seed",
        "1",
        "--out",
        plan,
    ]);
    let text = std::fs::read_to_string(plan).unwrap();
    assert!(text.starts_with("# budget="));

    let report = dir.path().join("r.json");
    ok(&[
        "train",
        "--dataset",
        &data,
        "--variant",
        "sfr,gcn",
        "--attack",
        "external",
        "--plan",
        plan,
        "--repeats",
        "2",
        "--pretrain-epochs",
        "20",
        "--finetune-epochs",
        "5",
        "--out",
        report.to_str().unwrap(),
        "--format",
        "json",
        "--deterministic",
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(v["trials"].as_array().unwrap().len(), 4);
    assert_eq!(v["metadata"]["attack"], "external");
    assert_eq!(v["metadata"]["deterministic"], true);
}

#[test]
fn markdown_report_to_stdout() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 60);
    let out = ok(&[
        "train",
        "--dataset",
        &data,
        "--variant",
        "mlp",
        "--attack",
        "random",
        "--ptb",
        "0.05",
        "--repeats",
        "2",
        "--pretrain-epochs",
        "10",
        "--format",
        "md",
    ]);
    let table = String::from_utf8(out.stdout).unwrap();
    assert!(
        table
            .lines()
            .any(|l| l.starts_with("| mlp |") && l.contains('±')),
        "{table}"
    );
}

#[test]
fn env_precision_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 60);
    let out = Command::new(env!("CARGO_BIN_EXE_sfr"))
        .args([
            "train",
            "--dataset",
            &data,
            "--variant",
            "gcn",
            "--repeats",
            "1",
            "--pretrain-epochs",
            "5",
        ])
        .env("SFR_PRECISION", "f64")
        .env("SFR_THREADS", "1")
        .output()
        .unwrap();
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["metadata"]["precision"], "f64");
    assert_eq!(v["metadata"]["threads"], 1);
}

#[test]
fn bench_and_paired_effect_write_json() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 60);
    let bench = dir.path().join("bench.json");
    ok(&[
        "bench",
        "--dataset",
        &data,
        "--variants",
        "sfr,gcn",
        "--repeats",
        "1",
        "--pretrain-epochs",
        "12",
        "--finetune-epochs",
        "8",
        "--out",
        bench.to_str().unwrap(),
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&bench).unwrap()).unwrap();
    let stages: Vec<&str> = v["entries"]
        .as_array()
        .unwrap()
        .iter()
        .map(|e| e["stage"].as_str().unwrap())
        .collect();
    assert_eq!(stages, ["finetune", "pretrain", "train"]);

    let pe = dir.path().join("pe.json");
    ok(&[
        "paired-effect",
        "--dataset",
        &data,
        "--ptb",
        "0.1",
        "--repeats",
        "2",
        "--seed",
        "3",
        "--pretrain-epochs",
        "20",
        "--out",
        pe.to_str().unwrap(),
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&pe).unwrap()).unwrap();
    assert_eq!(v["seeds"].as_array().unwrap().len(), 2);
    assert!(v["difference"].is_number());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = synth(dir.path(), 60);
    assert_eq!(sfr(&["check-grad", "--seed", "3"]).status.code(), Some(0));
    // Validation: attack without --ptb, bad variant, bad flag, missing dataset.
    assert_eq!(
        sfr(&["train", "--dataset", &data, "--attack", "dice"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(
        sfr(&["train", "--dataset", &data, "--variant", "nope"])
            .status
            .code(),
        Some(1)
    );
    assert_eq!(sfr(&["train", "--bogus"]).status.code(), Some(1));
    assert_eq!(
        sfr(&["train", "--dataset", "/nonexistent/dir"])
            .status
            .code(),
        Some(1)
    );
    // Numeric: a divergent learning rate overflows the logits.
    let out = sfr(&[
        "train",
        "--dataset",
        &data,
        "--variant",
        "gcn",
        "--repeats",
        "1",
        "--lr",
        "1e30",
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("variant gcn, repeat 0"));
    // Capacity: the dense gradient attack refuses graphs above its node cap.
    let big = dir.path().join("big");
    ok(&[
        "synth",
        "--nodes",
        "5001",
        "--classes",
        "2",
        "--p-in",
        "0.0005",
        "--p-out",
        "0.0001",
        "--out",
        big.to_str().unwrap(),
    ]);
    let out = sfr(&[
        "attack",
        "--dataset",
        big.to_str().unwrap(),
        "--method",
        "grad",
        "--ptb",
        "0.1",
        "--out",
        dir.path().join("p.tsv").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(3));
}
