use serde::{Deserialize, Serialize};

use crate::anomaly::ConfusionTally;
use crate::attack::EpochCounts;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionSummary {
    pub detector: String,
    pub alpha: f64,
    pub tally: ConfusionTally,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub epochs: u64,
    /// Flags on susceptible ports over evaluated susceptible port-epochs.
    pub false_alarm_rate: f64,
}

/// Headline numbers of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub seed: u64,
    pub scale: String,
    pub world_fingerprint: String,
    pub fleet_size: usize,
    pub n_ports: usize,
    pub horizon_days: u64,
    pub warmup_days: u64,
    pub attack_enabled: bool,
    pub delay_mean_min: f64,
    pub detector: Option<String>,
    pub alpha: Option<f64>,
    /// First tick of the evaluation window (the final week, clipped to the
    /// end of warm-up).
    pub final_window_start: u64,
    pub final_window_days: f64,
    pub final_window_revenue_usd: f64,
    pub final_window_revenue_per_driver_usd: f64,
    /// Final-window revenue scaled to seven days.
    pub weekly_revenue_usd: f64,
    pub weekly_revenue_per_driver_usd: f64,
    pub total_revenue_usd: f64,
    pub total_revenue_cents: u64,
    pub daily_revenue_usd: Vec<f64>,
    pub trips_requested: u64,
    pub trips_fulfilled: u64,
    pub trips_expired: u64,
    pub final_window_fulfillment_rate: f64,
    pub final_window_mean_queue_time_min: f64,
    pub final_window_mean_charge_duration_min: f64,
    pub sessions: u64,
    pub infected_sessions: u64,
    pub stranded_events: u64,
    pub repair_visits: u64,
    pub repair_cost_usd: f64,
    pub repair_cost_cents: u64,
    pub recovery_rate: f64,
    pub detection: Option<DetectionSummary>,
    pub sir: Vec<EpochCounts>,
}

/// Revenue loss of a scenario against its attack-free twin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossReport {
    pub seed: u64,
    pub baseline_revenue_usd: f64,
    pub scenario_revenue_usd: f64,
    pub loss_usd: f64,
    pub loss_pct: f64,
    pub baseline_per_driver_usd: f64,
    pub scenario_per_driver_usd: f64,
    pub loss_per_driver_usd: f64,
    pub repair_cost_usd: f64,
}

/// Weekly loss of `scenario` relative to `baseline`; both must come from the
/// same world, seed, fleet and horizon.
pub fn pair_baseline(scenario: &RunSummary, baseline: &RunSummary) -> Result<LossReport> {
    let mismatch = |what: &str| Err(Error::Mismatch(format!("{what} differs between scenario and baseline")));
    if scenario.seed != baseline.seed {
        return mismatch("seed");
    }
    if scenario.horizon_days != baseline.horizon_days || scenario.warmup_days != baseline.warmup_days {
        return mismatch("horizon");
    }
    if scenario.fleet_size != baseline.fleet_size {
        return mismatch("fleet size");
    }
    if scenario.world_fingerprint != baseline.world_fingerprint {
        return mismatch("world");
    }
    Ok(loss_between(
        scenario.seed,
        baseline.weekly_revenue_usd,
        scenario.weekly_revenue_usd,
        scenario.fleet_size,
        scenario.repair_cost_usd,
    ))
}

/// Loss arithmetic shared by [`pair_baseline`]; per-driver figures divide by
/// `fleet_size`.
pub fn loss_between(seed: u64, baseline_usd: f64, scenario_usd: f64, fleet_size: usize, repair_cost_usd: f64) -> LossReport {
    let n = fleet_size.max(1) as f64;
    let loss = baseline_usd - scenario_usd;
    LossReport {
        seed,
        baseline_revenue_usd: baseline_usd,
        scenario_revenue_usd: scenario_usd,
        loss_usd: loss,
        loss_pct: if baseline_usd > 0.0 { 100.0 * loss / baseline_usd } else { 0.0 },
        baseline_per_driver_usd: baseline_usd / n,
        scenario_per_driver_usd: scenario_usd / n,
        loss_per_driver_usd: loss / n,
        repair_cost_usd,
    }
}
