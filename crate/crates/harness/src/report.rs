//! Suite-level tables: per-run summaries, rank-test comparisons and sweep
//! trends. All are pure functions of the run records, so `report` can
//! rebuild them from disk.

use std::fmt::Write as _;
use std::path::Path;

use hopper_core::metrics::{HopCycleMetrics, Summary};
use hopper_core::stats::mann_whitney_u;
use serde::Deserialize;

use crate::error::HarnessError;
use crate::plan::ExperimentPlan;
use crate::runner::{RunRecord, RunStatus, SuiteResult, METRICS_FILE, SUMMARY_FILE};

pub const SUMMARY_CSV: &str = "summary.csv";
pub const COMPARISONS_CSV: &str = "comparisons.csv";
pub const TREND_CSV: &str = "trend.csv";

/// Metric column names and accessors, in report order.
pub const METRICS: [(&str, fn(&HopCycleMetrics) -> f64); 4] = [
    ("power_w", |m| m.power),
    ("tracking_error_m", |m| m.tracking_error),
    ("jerk_m_s3", |m| m.jerk),
    ("hop_height_m", |m| m.hop_height),
];

pub fn write_reports(dir: &Path, suite: &SuiteResult, alpha: f64) -> Result<(), HarnessError> {
    write(dir, SUMMARY_CSV, &summary_table(suite))?;
    write(dir, COMPARISONS_CSV, &comparison_table(suite, alpha))?;
    if suite.plan.sweep.is_some() {
        write(dir, TREND_CSV, &trend_table(suite))?;
    }
    Ok(())
}

fn write(dir: &Path, name: &str, text: &str) -> Result<(), HarnessError> {
    let path = dir.join(name);
    std::fs::write(&path, text).map_err(HarnessError::io(&path))
}

fn status(r: &RunRecord) -> &'static str {
    match r.status {
        RunStatus::Completed => "completed",
        RunStatus::Failed => "failed",
    }
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

/// One row per run: median, quartiles and mean of every metric.
pub fn summary_table(suite: &SuiteResult) -> String {
    let mut s = String::from("design,behavior,status,dt_s,cycles");
    for (name, _) in METRICS {
        write!(s, ",{name}_mean,{name}_median,{name}_q1,{name}_q3").unwrap();
    }
    s.push('\n');
    for (r, m) in suite.records.iter().zip(&suite.metrics) {
        write!(s, "{},{},{},{},{}", r.design, r.behavior, status(r), opt(r.dt_s), r.cycles).unwrap();
        for (_, f) in METRICS {
            match m.as_deref().map(|m| column(m, f)).and_then(|c| Summary::of(&c).ok()) {
                Some(x) => write!(s, ",{},{},{},{}", x.mean, x.median, x.q1, x.q3).unwrap(),
                None => s.push_str(",,,,"),
            }
        }
        s.push('\n');
    }
    s
}

fn column(m: &[HopCycleMetrics], f: fn(&HopCycleMetrics) -> f64) -> Vec<f64> {
    m.iter().map(f).collect()
}

/// One row per (behavior, design, baseline) with the two-sided rank test
/// of every metric.
pub fn comparison_table(suite: &SuiteResult, alpha: f64) -> String {
    let mut s = String::from("behavior,design,baseline,status,n_design,n_baseline");
    for (name, _) in METRICS {
        write!(s, ",{name}_design_mean,{name}_baseline_mean,{name}_u,{name}_p,{name}_significant").unwrap();
    }
    s.push('\n');
    for &b in &suite.plan.behaviors {
        for c in &suite.plan.comparisons {
            let a = suite.find(&c.design, b).and_then(|(_, m)| m);
            let base = suite.find(&c.baseline, b).and_then(|(_, m)| m);
            write!(s, "{b},{},{}", c.design, c.baseline).unwrap();
            match (a, base) {
                (Some(a), Some(base)) => {
                    write!(s, ",ok,{},{}", a.len(), base.len()).unwrap();
                    for (_, f) in METRICS {
                        let (x, y) = (column(a, f), column(base, f));
                        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
                        match mann_whitney_u(&x, &y) {
                            Ok(t) => write!(s, ",{},{},{},{},{}", mean(&x), mean(&y), t.u, t.p, t.significant(alpha)).unwrap(),
                            Err(_) => s.push_str(",,,,,"),
                        }
                    }
                }
                _ => {
                    s.push_str(",missing,,");
                    s.push_str(&",,,,,".repeat(METRICS.len()));
                }
            }
            s.push('\n');
        }
    }
    s
}

/// Tracking error and power against the swept property.
pub fn trend_table(suite: &SuiteResult) -> String {
    let Some(axis) = &suite.plan.sweep else {
        return String::new();
    };
    let mut s = format!(
        "property,value,{},behavior,design,status,cycles,tracking_error_m_mean,tracking_error_m_median,\
         tracking_error_m_q1,tracking_error_m_q3,power_w_mean,hop_height_m_mean\n",
        axis.fixed_property
    );
    for &b in &suite.plan.behaviors {
        for (d, &v) in suite.plan.designs.iter().zip(&axis.values) {
            let Some((r, m)) = suite.find(&d.name, b) else { continue };
            write!(s, "{},{v},{},{b},{},{},{}", axis.property, axis.fixed_value, d.name, status(r), r.cycles).unwrap();
            let stat = |f| m.map(|m| column(m, f)).and_then(|c| Summary::of(&c).ok());
            match (stat(METRICS[1].1), stat(METRICS[0].1), stat(METRICS[3].1)) {
                (Some(t), Some(p), Some(h)) => {
                    write!(s, ",{},{},{},{},{},{}", t.mean, t.median, t.q1, t.q3, p.mean, h.mean).unwrap()
                }
                _ => s.push_str(",,,,,,"),
            }
            s.push('\n');
        }
    }
    s
}

#[derive(Deserialize)]
struct MetricsRow {
    power_w: f64,
    tracking_error_m: f64,
    jerk_m_s3: f64,
    hop_height_m: f64,
}

/// Per-cycle metrics from a run's metrics.csv.
pub fn read_metrics(path: &Path) -> Result<Vec<HopCycleMetrics>, HarnessError> {
    let mut reader = csv::Reader::from_path(path).map_err(HarnessError::csv(path))?;
    reader
        .deserialize::<MetricsRow>()
        .map(|row| {
            row.map(|r| HopCycleMetrics {
                power: r.power_w,
                tracking_error: r.tracking_error_m,
                jerk: r.jerk_m_s3,
                hop_height: r.hop_height_m,
            })
            .map_err(HarnessError::csv(path))
        })
        .collect()
}

/// Rebuild a suite from the artifacts of a previous run. Runs whose
/// summary is missing are treated as failed.
pub fn load_suite(dir: &Path) -> Result<SuiteResult, HarnessError> {
    let plan = ExperimentPlan::read(dir)?;
    let mut records = Vec::new();
    let mut metrics = Vec::new();
    for run in plan.runs() {
        let design = &plan.designs[run.design];
        let summary = dir.join(&run.dir).join(SUMMARY_FILE);
        let record: RunRecord = match std::fs::read_to_string(&summary) {
            Ok(text) => serde_json::from_str(&text).map_err(HarnessError::json(&summary))?,
            Err(_) => RunRecord {
                design: design.name.clone(),
                behavior: run.behavior,
                status: RunStatus::Failed,
                error: Some("run artifacts missing".into()),
                dt_s: design.dt_s,
                cycles: 0,
                summary: None,
                trace_path: None,
                metrics_path: None,
                wall_clock_s: 0.0,
                config_fingerprint: plan.config_fingerprint.clone(),
            },
        };
        let m = match record.status {
            RunStatus::Completed => Some(read_metrics(&dir.join(&run.dir).join(METRICS_FILE))?),
            RunStatus::Failed => None,
        };
        records.push(record);
        metrics.push(m);
    }
    Ok(SuiteResult { plan, records, metrics })
}
