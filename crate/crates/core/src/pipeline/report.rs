use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::{RunConfig, Variant};
use crate::classify::{EvalReport, Interval};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StoreInfo {
    pub path: String,
    pub config_hash: String,
    /// SHA-256 of the store contents; identical across all variants of a report.
    pub digest: String,
    pub dim: usize,
    pub rows: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coverage {
    pub records: usize,
    pub used: usize,
    /// Manifest ids absent from each store.
    pub missing: BTreeMap<String, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub run: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub c: f64,
    pub gamma: f64,
    pub cv_accuracy: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VariantReport {
    pub variant: Variant,
    pub fused_dim: usize,
    pub runs: Vec<RunRecord>,
    pub summary: EvalReport,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FuseReport {
    pub report_hash: String,
    pub seed: u64,
    pub labels: Vec<String>,
    pub stores: BTreeMap<String, StoreInfo>,
    pub coverage: Coverage,
    pub variants: Vec<VariantReport>,
    pub config: RunConfig,
}

impl FuseReport {
    pub fn variant(&self, v: Variant) -> Option<&VariantReport> {
        self.variants.iter().find(|r| r.variant == v)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Error::parse(path, e.line(), e.to_string()))
    }

    /// One line per (variant, run) for external plotting.
    pub fn runs_table(&self) -> String {
        let mut out = String::from("variant\trun\tn_train\tn_test\tc\tgamma\tcv_accuracy\taccuracy\tprecision\trecall\tf_score\n");
        for v in &self.variants {
            for (r, m) in v.runs.iter().zip(&v.summary.runs) {
                writeln!(
                    out,
                    "{}\t{}\t{}\t{}\t{}\t{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}",
                    v.variant, r.run, r.n_train, r.n_test, r.c, r.gamma, r.cv_accuracy, m.accuracy, m.precision,
                    m.recall, m.f_score
                )
                .unwrap();
            }
        }
        out
    }
}

fn fmt_metric(mean: f64, ci: Option<Interval>) -> String {
    match ci {
        Some(i) => format!("{:6.2} ± {:5.2}", 100.0 * i.mean, 100.0 * i.halfwidth),
        None => format!("{:6.2}        ", 100.0 * mean),
    }
}

/// Human-readable summary of a report.
pub fn render_report(report: &FuseReport) -> String {
    let mut out = String::new();
    let c = &report.coverage;
    writeln!(out, "report {}", &report.report_hash[..16.min(report.report_hash.len())]).unwrap();
    writeln!(out, "seed {}  classes {}  images {}/{} used", report.seed, report.labels.len(), c.used, c.records).unwrap();
    for (kind, ids) in &c.missing {
        if !ids.is_empty() {
            writeln!(out, "  {kind}: {} image(s) missing", ids.len()).unwrap();
        }
    }
    for (kind, s) in &report.stores {
        writeln!(out, "store {kind}: dim {} rows {} digest {}", s.dim, s.rows, &s.digest[..16]).unwrap();
    }
    let level = report.variants.first().map_or(0.95, |v| v.summary.level);
    writeln!(out).unwrap();
    writeln!(
        out,
        "{:<8}{:>6}{:>6}  {:<16}{:<16}{:<16}{:<16}",
        "variant",
        "dim",
        "runs",
        "accuracy",
        "precision",
        "recall",
        "f-score"
    )
    .unwrap();
    for v in &report.variants {
        let s = &v.summary;
        let mean = |f: fn(&crate::classify::RunMetrics) -> f64| s.runs.iter().map(f).sum::<f64>() / s.runs.len() as f64;
        writeln!(
            out,
            "{:<8}{:>6}{:>6}  {:<16}{:<16}{:<16}{:<16}",
            v.variant.as_str(),
            v.fused_dim,
            s.runs.len(),
            fmt_metric(mean(|r| r.accuracy), s.accuracy),
            fmt_metric(mean(|r| r.precision), s.precision),
            fmt_metric(mean(|r| r.recall), s.recall),
            fmt_metric(mean(|r| r.f_score), s.f_score),
        )
        .unwrap();
    }
    if report.variants.iter().any(|v| v.summary.runs.len() > 1) {
        writeln!(out, "(± is the {:.0}% t-interval half-width over runs)", 100.0 * level).unwrap();
    }
    for v in &report.variants {
        let flagged: Vec<&str> = v
            .summary
            .runs
            .iter()
            .flat_map(|r| r.per_class.iter().enumerate())
            .filter(|(_, m)| m.precision_undefined || m.recall_undefined)
            .map(|(i, _)| report.labels[i].as_str())
            .collect();
        if !flagged.is_empty() {
            let mut flagged = flagged;
            flagged.sort_unstable();
            flagged.dedup();
            writeln!(out, "{}: undefined precision/recall reported as 0 for {}", v.variant, flagged.join(", ")).unwrap();
        }
    }
    if let Some(v) = report.variants.last() {
        if let Some(run) = v.summary.runs.first() {
            writeln!(out, "\nconfusion ({} run 0, rows = true class)", v.variant).unwrap();
            for (label, row) in report.labels.iter().zip(&run.confusion.counts) {
                let cells: Vec<String> = row.iter().map(|n| format!("{n:>5}")).collect();
                writeln!(out, "{label:<20}{}", cells.join("")).unwrap();
            }
        }
    }
    out
}
