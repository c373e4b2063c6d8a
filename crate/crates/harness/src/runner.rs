//! Executes a plan: timestep resolution, simulation, metrics and per-run
//! artifacts.

use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use hopper_core::behavior::BehaviorKind;
use hopper_core::config::Config;
use hopper_core::metrics::{aggregate, evaluate, HopCycleMetrics, MetricSummaries, MetricsReport};
use hopper_core::sim::simulate;
use log::{info, warn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::plan::{DtPolicy, ExperimentPlan, PlannedRun};
use crate::report;

pub const TRACE_FILE: &str = "trace.csv";
pub const METRICS_FILE: &str = "metrics.csv";
pub const SUMMARY_FILE: &str = "summary.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Completed,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub design: String,
    pub behavior: BehaviorKind,
    pub status: RunStatus,
    pub error: Option<String>,
    pub dt_s: Option<f64>,
    pub cycles: usize,
    pub summary: Option<MetricSummaries>,
    /// Relative to the plan directory.
    pub trace_path: Option<String>,
    pub metrics_path: Option<String>,
    pub wall_clock_s: f64,
    pub config_fingerprint: String,
}

/// Records in plan order, with the per-cycle metrics of completed runs.
#[derive(Debug, Clone)]
pub struct SuiteResult {
    pub plan: ExperimentPlan,
    pub records: Vec<RunRecord>,
    pub metrics: Vec<Option<Vec<HopCycleMetrics>>>,
}

impl SuiteResult {
    pub fn failures(&self) -> usize {
        self.records.iter().filter(|r| r.status == RunStatus::Failed).count()
    }

    pub fn find(&self, design: &str, behavior: BehaviorKind) -> Option<(&RunRecord, Option<&[HopCycleMetrics]>)> {
        self.records
            .iter()
            .zip(&self.metrics)
            .find(|(r, _)| r.design == design && r.behavior == behavior)
            .map(|(r, m)| (r, m.as_deref()))
    }
}

/// Fill in each design's timestep. Under the automatic policy the maximum
/// stable step is measured per design; designs with no stable step keep
/// `dt_s = None` and their runs fail.
pub fn resolve_dt(cfg: &Config, plan: &mut ExperimentPlan) -> Result<(), HarnessError> {
    match plan.dt_policy {
        DtPolicy::Fixed { dt_s } => {
            for d in &mut plan.designs {
                d.dt_s = Some(dt_s);
            }
        }
        DtPolicy::Auto { .. } => {
            let designs = plan.designs.iter().map(|d| d.to_design()).collect::<Result<Vec<_>, _>>()?;
            let probes: Vec<_> = designs.par_iter().map(|d| cfg.max_stable_dt(d)).collect();
            for (entry, probe) in plan.designs.iter_mut().zip(probes) {
                match probe {
                    Ok(p) => {
                        let dt = cfg.auto_dt(p.dt_max);
                        info!("{}: dt_max {:.3e} s{}, using {:.3e} s", entry.name, p.dt_max, if p.censored { " (censored)" } else { "" }, dt);
                        entry.dt_max_s = Some(p.dt_max);
                        entry.dt_max_censored = Some(p.censored);
                        entry.dt_s = Some(dt);
                    }
                    Err(e) => warn!("{}: {e}", entry.name),
                }
            }
        }
    }
    Ok(())
}

/// Run every design × behavior of `plan` into `dir` and write the reports.
/// Individual run failures are recorded and do not stop the suite.
pub fn execute(cfg: &Config, mut plan: ExperimentPlan, dir: &Path) -> Result<SuiteResult, HarnessError> {
    std::fs::create_dir_all(dir).map_err(HarnessError::io(dir))?;
    resolve_dt(cfg, &mut plan)?;
    plan.write(dir)?;
    let runs = plan.runs();
    let results: Vec<_> = runs.par_iter().map(|r| run_one(cfg, &plan, r, dir)).collect::<Result<_, _>>()?;
    let (records, metrics): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let suite = SuiteResult { plan, records, metrics };
    report::write_reports(dir, &suite, cfg.metrics.alpha)?;
    Ok(suite)
}

fn run_one(
    cfg: &Config,
    plan: &ExperimentPlan,
    run: &PlannedRun,
    dir: &Path,
) -> Result<(RunRecord, Option<Vec<HopCycleMetrics>>), HarnessError> {
    let entry = &plan.designs[run.design];
    let start = Instant::now();
    let mut record = RunRecord {
        design: entry.name.clone(),
        behavior: run.behavior,
        status: RunStatus::Failed,
        error: None,
        dt_s: entry.dt_s,
        cycles: 0,
        summary: None,
        trace_path: None,
        metrics_path: None,
        wall_clock_s: 0.0,
        config_fingerprint: plan.config_fingerprint.clone(),
    };
    let run_path = dir.join(&run.dir);
    std::fs::create_dir_all(&run_path).map_err(HarnessError::io(&run_path))?;

    let outcome = simulate_run(cfg, plan, run);
    let mut metrics = None;
    match outcome {
        Ok((trace, report)) => {
            let trace_file = run_path.join(TRACE_FILE);
            let f = File::create(&trace_file).map_err(HarnessError::io(&trace_file))?;
            trace.write_csv(BufWriter::new(f), cfg.sim.trace_stride).map_err(HarnessError::io(&trace_file))?;
            let metrics_file = run_path.join(METRICS_FILE);
            let f = File::create(&metrics_file).map_err(HarnessError::io(&metrics_file))?;
            report.write_csv(BufWriter::new(f)).map_err(HarnessError::io(&metrics_file))?;
            record.status = RunStatus::Completed;
            record.cycles = report.cycles.len();
            record.summary = Some(report.summary);
            record.trace_path = Some(format!("{}/{TRACE_FILE}", run.dir));
            record.metrics_path = Some(format!("{}/{METRICS_FILE}", run.dir));
            metrics = Some(report.cycles.iter().map(|c| c.metrics).collect());
            info!("{} {}: {} cycles", entry.name, run.behavior, record.cycles);
        }
        Err(message) => {
            warn!("{} {}: {message}", entry.name, run.behavior);
            record.error = Some(message);
        }
    }
    record.wall_clock_s = start.elapsed().as_secs_f64();
    let summary_file = run_path.join(SUMMARY_FILE);
    let text = serde_json::to_string_pretty(&record).map_err(HarnessError::json(&summary_file))?;
    std::fs::write(&summary_file, text + "\n").map_err(HarnessError::io(&summary_file))?;
    Ok((record, metrics))
}

fn simulate_run(
    cfg: &Config,
    plan: &ExperimentPlan,
    run: &PlannedRun,
) -> Result<(hopper_core::sim::SimTrace, MetricsReport), String> {
    let entry = &plan.designs[run.design];
    let dt = entry.dt_s.ok_or_else(|| "no stable timestep found".to_string())?;
    if let (DtPolicy::Auto { .. }, Some(max)) = (plan.dt_policy, entry.dt_max_s) {
        assert!(dt <= max, "automatic timestep {dt} exceeds the measured maximum {max}");
    }
    let design = entry.to_design().map_err(|e| e.to_string())?;
    let mut behavior = cfg.behaviors.spec(run.behavior);
    behavior.duration = plan.duration_s;
    let model = cfg.model(&design, behavior.terrain()).map_err(|e| e.to_string())?;
    let out = simulate(&model, &cfg.controller, &behavior, &cfg.sim_config(dt)).map_err(|e| e.to_string())?;
    let cycles = evaluate(&out.trace, &behavior, behavior.transient, cfg.metrics.jerk_cutoff_hz).map_err(|e| e.to_string())?;
    let report =
        aggregate(&cycles, cfg.metrics.jerk_cutoff_hz, &plan.config_fingerprint).map_err(|e| e.to_string())?;
    Ok((out.trace, report))
}
