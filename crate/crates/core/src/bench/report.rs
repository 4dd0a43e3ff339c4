use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{stage_name, stats, MetricsReport};
use crate::error::{Result, SfrError};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
    Md,
}

impl FromStr for ReportFormat {
    type Err = SfrError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "md" | "markdown" => Ok(ReportFormat::Md),
            other => Err(SfrError::validation(format!(
                "unknown report format '{other}'"
            ))),
        }
    }
}

/// "82.1±0.6" from values already in percentage points.
pub fn format_pct(mean: f64, std: f64) -> String {
    format!("{mean:.1}±{std:.1}")
}

fn csv_err(e: csv::Error) -> SfrError {
    SfrError::validation(format!("csv encoding failed: {e}"))
}

fn render_csv(r: &MetricsReport) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "variant",
        "repeat",
        "seed",
        "clean_train",
        "clean_val",
        "clean_test",
        "attacked_train",
        "attacked_val",
        "attacked_test",
        "added",
        "removed",
        "ptb_ratio",
        "homophily_delta",
        "pretrain_ms_per_epoch",
        "finetune_ms_per_epoch",
        "train_ms_per_epoch",
    ])
    .map_err(csv_err)?;
    for t in &r.trials {
        let stage_ms = |name: &str| {
            let xs: Vec<f64> = t
                .history
                .epochs
                .iter()
                .filter(|e| stage_name(e.stage) == name)
                .map(|e| e.millis)
                .collect();
            if xs.is_empty() {
                String::new()
            } else {
                stats::median(&xs).to_string()
            }
        };
        let p = t.perturbation;
        w.write_record([
            t.variant.to_string(),
            t.repeat.to_string(),
            t.seed.to_string(),
            t.clean.train.to_string(),
            t.clean.val.to_string(),
            t.clean.test.to_string(),
            t.attacked.train.to_string(),
            t.attacked.val.to_string(),
            t.attacked.test.to_string(),
            p.map_or(String::new(), |p| p.added.to_string()),
            p.map_or(String::new(), |p| p.removed.to_string()),
            p.map_or(String::new(), |p| p.ptb_ratio.to_string()),
            p.map_or(String::new(), |p| p.homophily_delta.to_string()),
            stage_ms("pretrain"),
            stage_ms("finetune"),
            stage_ms("train"),
        ])
        .map_err(csv_err)?;
    }
    let bytes = w
        .into_inner()
        .map_err(|e| SfrError::validation(format!("csv flush failed: {e}")))?;
    String::from_utf8(bytes)
        .map_err(|e| SfrError::validation(format!("csv output is not utf-8: {e}")))
}

fn render_md(r: &MetricsReport) -> String {
    let m = &r.metadata;
    let stages: BTreeSet<&String> = r
        .aggregates
        .iter()
        .flat_map(|a| a.ms_per_epoch.keys())
        .collect();
    let mut out = String::new();
    let ptb = m.ptb_ratio.map_or(String::new(), |p| format!(" @ {p}"));
    let _ = writeln!(
        out,
        "{} | attack {}{} | {} repeats | seed {} | {}\n",
        m.dataset,
        m.attack,
        ptb,
        m.repeats,
        m.base_seed,
        m.precision.as_str()
    );
    let mut header = "| variant | clean | attacked |".to_string();
    let mut rule = "|---|---|---|".to_string();
    for s in &stages {
        let _ = write!(header, " {s} ms/epoch |");
        rule.push_str("---|");
    }
    let _ = writeln!(out, "{header}\n{rule}");
    for a in &r.aggregates {
        let mut row = format!(
            "| {} | {} | {} |",
            a.variant,
            format_pct(a.clean_mean, a.clean_std),
            format_pct(a.attacked_mean, a.attacked_std)
        );
        for s in &stages {
            match a.ms_per_epoch.get(*s) {
                Some(ms) => {
                    let _ = write!(row, " {ms:.2} |");
                }
                None => row.push_str(" – |"),
            }
        }
        let _ = writeln!(out, "{row}");
    }
    out
}

/// Renders the report after checking that its aggregates match its rows.
pub fn render_report(r: &MetricsReport, format: ReportFormat) -> Result<String> {
    r.check_consistency()?;
    match format {
        ReportFormat::Json => serde_json::to_string_pretty(r)
            .map(|s| s + "\n")
            .map_err(|e| SfrError::validation(format!("json encoding failed: {e}"))),
        ReportFormat::Csv => render_csv(r),
        ReportFormat::Md => Ok(render_md(r)),
    }
}

/// Writes the rendered report to `path`, or to stdout when `path` is `None`.
pub fn emit_report(r: &MetricsReport, format: ReportFormat, path: Option<&Path>) -> Result<()> {
    let text = render_report(r, format)?;
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| SfrError::io(p, e)),
        None => std::io::stdout()
            .lock()
            .write_all(text.as_bytes())
            .map_err(|e| SfrError::io("<stdout>", e)),
    }
}
