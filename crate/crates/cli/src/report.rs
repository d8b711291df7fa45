//! Folds run summaries under a directory into one long-format CSV.

use std::path::Path;

use anyhow::{Context, Result};
use esms_core::RunSummary;
use serde::Serialize;
use walkdir::WalkDir;

use crate::rundir::SUMMARY_FILE;
use crate::settings::MissingInput;

/// One observation: `value` of `metric` for one run. `index` is the day for
/// daily series and the epoch tick for the SIR trajectory.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ReportRow {
    pub run: String,
    pub seed: u64,
    pub scale: String,
    pub delay_min: f64,
    pub detector: String,
    pub alpha: Option<f64>,
    pub metric: String,
    pub index: Option<u64>,
    pub value: f64,
}

/// Every `summary.json` below `root`, in path order.
pub fn collect(root: &Path) -> Result<Vec<(String, RunSummary)>> {
    if !root.exists() {
        return Err(MissingInput(root.to_path_buf()).into());
    }
    let mut found = Vec::new();
    for entry in WalkDir::new(root).sort_by_file_name() {
        let entry = entry?;
        if entry.file_name() != SUMMARY_FILE {
            continue;
        }
        let path = entry.path();
        let text = std::fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))?;
        let summary: RunSummary =
            serde_json::from_str(&text).with_context(|| format!("{} is not a run summary", path.display()))?;
        let run = path
            .parent()
            .and_then(|p| p.strip_prefix(root).ok())
            .map(|p| p.to_string_lossy().replace('\\', "/"))
            .unwrap_or_default();
        found.push((if run.is_empty() { ".".into() } else { run }, summary));
    }
    Ok(found)
}

pub fn rows(runs: &[(String, RunSummary)]) -> Vec<ReportRow> {
    let mut out = Vec::new();
    for (run, s) in runs {
        let row = |metric: &str, index: Option<u64>, value: f64| ReportRow {
            run: run.clone(),
            seed: s.seed,
            scale: s.scale.clone(),
            delay_min: if s.attack_enabled { s.delay_mean_min } else { 0.0 },
            detector: s.detector.clone().unwrap_or_else(|| "none".into()),
            alpha: s.alpha,
            metric: metric.into(),
            index,
            value,
        };
        let scalars = [
            ("weekly_revenue_usd", s.weekly_revenue_usd),
            ("weekly_revenue_per_driver_usd", s.weekly_revenue_per_driver_usd),
            ("total_revenue_usd", s.total_revenue_usd),
            ("fulfillment_rate", s.final_window_fulfillment_rate),
            ("mean_queue_time_min", s.final_window_mean_queue_time_min),
            ("mean_charge_duration_min", s.final_window_mean_charge_duration_min),
            ("sessions", s.sessions as f64),
            ("infected_sessions", s.infected_sessions as f64),
            ("stranded_events", s.stranded_events as f64),
            ("repair_visits", s.repair_visits as f64),
            ("repair_cost_usd", s.repair_cost_usd),
            ("recovery_rate", s.recovery_rate),
        ];
        for (m, v) in scalars {
            out.push(row(m, None, v));
        }
        if let Some(d) = &s.detection {
            for (m, v) in [
                ("accuracy", d.accuracy),
                ("precision", d.precision),
                ("recall", d.recall),
                ("f1", d.f1),
                ("false_alarm_rate", d.false_alarm_rate),
            ] {
                out.push(row(m, None, v));
            }
        }
        for (day, v) in s.daily_revenue_usd.iter().enumerate() {
            out.push(row("daily_revenue_usd", Some(day as u64), *v));
        }
        for e in &s.sir {
            out.push(row("n_s", Some(e.tick), e.n_s as f64));
            out.push(row("n_i", Some(e.tick), e.n_i as f64));
            out.push(row("n_r", Some(e.tick), e.n_r as f64));
        }
    }
    out
}

/// Writes the fold of `root` to `dest` and returns the row count.
pub fn write_report(root: &Path, dest: &Path) -> Result<usize> {
    let rows = rows(&collect(root)?);
    let mut w = csv::Writer::from_path(dest).with_context(|| format!("cannot create {}", dest.display()))?;
    for r in &rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(rows.len())
}
