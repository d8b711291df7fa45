//! Scenario grid over attack delays and detector sensitivities, run in
//! parallel with paired attack-free baselines.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use esms_core::anomaly::{ConfusionTally, DetectorKind};
use esms_core::engine::build_world;
use esms_core::{pair_baseline, LossReport, RunSummary, ScenarioConfig, World};
use rayon::prelude::*;
use serde::Serialize;

use crate::rundir;

/// Attack delays of the experiment grid, in minutes.
pub const PAPER_DELAYS: [f64; 3] = [5.0, 10.0, 15.0];

#[derive(Debug, Clone, PartialEq)]
pub struct DetectorSweep {
    pub kind: DetectorKind,
    pub alphas: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub delays: Vec<f64>,
    pub detectors: Vec<DetectorSweep>,
    pub seeds: Vec<u64>,
    pub include_baseline: bool,
    /// Also run every delay without a detector.
    pub include_no_detection: bool,
}

impl SweepSpec {
    /// Baseline, then each grid delay without detection and with every
    /// detector at the middle of its sensitivity range.
    pub fn paper_grid(seeds: Vec<u64>) -> Self {
        Self {
            delays: PAPER_DELAYS.to_vec(),
            detectors: DetectorKind::ALL
                .iter()
                .map(|&kind| DetectorSweep {
                    kind,
                    alphas: vec![kind.mid_alpha()],
                })
                .collect(),
            seeds,
            include_baseline: true,
            include_no_detection: true,
        }
    }

    /// Replaces every detector's sensitivities with its full sweep.
    pub fn with_full_alpha_grid(mut self) -> Self {
        for d in &mut self.detectors {
            d.alphas = d.kind.alpha_grid();
        }
        self
    }

    pub fn validate(&self, restrict_to_grid: bool) -> Result<()> {
        if self.seeds.is_empty() {
            bail!("sweep needs at least one seed");
        }
        if self.delays.is_empty() && !self.include_baseline {
            bail!("sweep has no scenarios");
        }
        if let Some(d) = self.delays.iter().find(|d| !(**d > 0.0)) {
            bail!("sweep delay {d} must be positive (the baseline covers zero)");
        }
        for d in &self.detectors {
            if d.alphas.is_empty() {
                bail!("detector {} has no sensitivity values", d.kind);
            }
            if restrict_to_grid {
                let (lo, hi) = d.kind.alpha_range();
                if let Some(a) = d.alphas.iter().find(|a| **a < lo - 1e-9 || **a > hi + 1e-9) {
                    bail!("{} sensitivity {a} is outside [{lo}, {hi}]", d.kind);
                }
            }
        }
        Ok(())
    }

    /// Scenarios in a fixed order: baseline first, then by delay.
    pub fn scenarios(&self) -> Vec<Scenario> {
        let mut out = Vec::new();
        if self.include_baseline {
            out.push(Scenario {
                delay_min: None,
                detector: None,
            });
        }
        for &d in &self.delays {
            if self.include_no_detection {
                out.push(Scenario {
                    delay_min: Some(d),
                    detector: None,
                });
            }
            for det in &self.detectors {
                for &a in &det.alphas {
                    out.push(Scenario {
                        delay_min: Some(d),
                        detector: Some((det.kind, a)),
                    });
                }
            }
        }
        out
    }
}

/// One cell of the grid. `delay_min: None` is the attack-free baseline.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scenario {
    pub delay_min: Option<f64>,
    pub detector: Option<(DetectorKind, f64)>,
}

impl Scenario {
    pub fn name(&self) -> String {
        match (self.delay_min, self.detector) {
            (None, _) => "baseline".into(),
            (Some(d), None) => format!("d{d}-none"),
            (Some(d), Some((k, a))) => format!("d{d}-{}-{a}", k.label()),
        }
    }

    pub fn apply(&self, base: &ScenarioConfig) -> ScenarioConfig {
        let mut c = base.clone();
        match self.delay_min {
            None => c.attack.enabled = false,
            Some(d) => {
                c.attack.enabled = true;
                c.attack.delay_mean_min = d;
            }
        }
        c.detector = self.detector.map(|(k, _)| k);
        c.detector_alpha = self.detector.map(|(_, a)| a);
        c
    }
}

/// One finished (scenario, seed) run.
#[derive(Debug, Clone)]
pub struct Outcome {
    pub scenario: Scenario,
    pub seed: u64,
    pub dir: PathBuf,
    pub summary: RunSummary,
    /// Against the same seed's baseline, when the sweep has one.
    pub loss: Option<LossReport>,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub outcomes: Vec<Outcome>,
}

/// Seed-averaged comparison row: revenue loss against repair cost.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ComparisonRow {
    pub scenario: String,
    pub delay_min: f64,
    pub detector: String,
    pub alpha: Option<f64>,
    pub seeds: usize,
    pub weekly_revenue_usd: f64,
    pub baseline_revenue_usd: Option<f64>,
    pub loss_usd: Option<f64>,
    pub loss_pct: Option<f64>,
    pub loss_per_driver_usd: Option<f64>,
    pub repair_cost_usd: f64,
    pub mean_queue_time_min: f64,
    pub mean_charge_duration_min: f64,
    pub fulfillment_rate: f64,
}

/// Seed-pooled detector confusion row.
#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct ConfusionRow {
    pub scenario: String,
    pub delay_min: f64,
    pub detector: String,
    pub alpha: f64,
    pub tp: u64,
    pub fp: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    pub tn: u64,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

impl SweepResult {
    pub fn comparison(&self) -> Vec<ComparisonRow> {
        let mut groups: BTreeMap<usize, Vec<&Outcome>> = BTreeMap::new();
        let order = self.scenario_order();
        for o in &self.outcomes {
            groups.entry(order[&o.scenario.name()]).or_default().push(o);
        }
        groups
            .into_values()
            .map(|g| {
                let s = g[0].scenario;
                let n = g.len() as f64;
                let mean = |f: &dyn Fn(&Outcome) -> f64| g.iter().map(|o| f(o)).sum::<f64>() / n;
                let mean_loss = |f: &dyn Fn(&LossReport) -> f64| -> Option<f64> {
                    let v: Option<Vec<f64>> = g.iter().map(|o| o.loss.as_ref().map(f)).collect();
                    v.map(|v| v.iter().sum::<f64>() / n)
                };
                ComparisonRow {
                    scenario: s.name(),
                    delay_min: s.delay_min.unwrap_or(0.0),
                    detector: s.detector.map_or("none".into(), |(k, _)| k.label().into()),
                    alpha: s.detector.map(|(_, a)| a),
                    seeds: g.len(),
                    weekly_revenue_usd: mean(&|o| o.summary.weekly_revenue_usd),
                    baseline_revenue_usd: mean_loss(&|l| l.baseline_revenue_usd),
                    loss_usd: mean_loss(&|l| l.loss_usd),
                    loss_pct: mean_loss(&|l| l.loss_pct),
                    loss_per_driver_usd: mean_loss(&|l| l.loss_per_driver_usd),
                    repair_cost_usd: mean(&|o| o.summary.repair_cost_usd),
                    mean_queue_time_min: mean(&|o| o.summary.final_window_mean_queue_time_min),
                    mean_charge_duration_min: mean(&|o| o.summary.final_window_mean_charge_duration_min),
                    fulfillment_rate: mean(&|o| o.summary.final_window_fulfillment_rate),
                }
            })
            .collect()
    }

    pub fn confusion(&self) -> Vec<ConfusionRow> {
        let order = self.scenario_order();
        let mut groups: BTreeMap<usize, (Scenario, ConfusionTally)> = BTreeMap::new();
        for o in &self.outcomes {
            let (Some(_), Some(det)) = (o.scenario.detector, &o.summary.detection) else {
                continue;
            };
            groups
                .entry(order[&o.scenario.name()])
                .or_insert((o.scenario, ConfusionTally::default()))
                .1
                .merge(&det.tally);
        }
        groups
            .into_values()
            .map(|(s, t)| {
                let (kind, alpha) = s.detector.expect("grouped rows have a detector");
                let e = t.evaluate();
                ConfusionRow {
                    scenario: s.name(),
                    delay_min: s.delay_min.unwrap_or(0.0),
                    detector: kind.label().into(),
                    alpha,
                    tp: t.tp,
                    fp: t.fp,
                    fn_: t.fn_,
                    tn: t.tn,
                    accuracy: e.accuracy,
                    precision: e.precision,
                    recall: e.recall,
                    f1: e.f1,
                }
            })
            .collect()
    }

    fn scenario_order(&self) -> BTreeMap<String, usize> {
        let mut order = BTreeMap::new();
        for o in &self.outcomes {
            let next = order.len();
            order.entry(o.scenario.name()).or_insert(next);
        }
        order
    }

    /// Writes `comparison.csv`, `confusion.csv` and `losses.csv` into `dir`.
    pub fn write_tables(&self, dir: &Path) -> Result<()> {
        write_rows(&dir.join("comparison.csv"), &self.comparison())?;
        write_rows(&dir.join("confusion.csv"), &self.confusion())?;
        let losses: Vec<LossRow> = self
            .outcomes
            .iter()
            .filter_map(|o| {
                o.loss.as_ref().map(|l| LossRow {
                    scenario: o.scenario.name(),
                    seed: o.seed,
                    baseline_revenue_usd: l.baseline_revenue_usd,
                    scenario_revenue_usd: l.scenario_revenue_usd,
                    loss_usd: l.loss_usd,
                    loss_pct: l.loss_pct,
                    loss_per_driver_usd: l.loss_per_driver_usd,
                    repair_cost_usd: l.repair_cost_usd,
                })
            })
            .collect();
        write_rows(&dir.join("losses.csv"), &losses)
    }
}

#[derive(Debug, Serialize)]
struct LossRow {
    scenario: String,
    seed: u64,
    baseline_revenue_usd: f64,
    scenario_revenue_usd: f64,
    loss_usd: f64,
    loss_pct: f64,
    loss_per_driver_usd: f64,
    repair_cost_usd: f64,
}

fn write_rows<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("cannot create {}", path.display()))?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Directory of one run inside a sweep.
pub fn run_dir(out: &Path, seed: u64, scenario: &Scenario) -> PathBuf {
    out.join(format!("seed-{seed}")).join(scenario.name())
}

/// Runs the grid under `out`, on `threads` workers (all cores when `None`).
/// Results are ordered by seed then scenario whatever the thread count.
pub fn run_sweep(base: &ScenarioConfig, spec: &SweepSpec, out: &Path, threads: Option<usize>) -> Result<SweepResult> {
    spec.validate(false)?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        builder = builder.num_threads(n.max(1));
    }
    let pool = builder.build().context("cannot start worker pool")?;
    pool.install(|| execute(base, spec, out))
}

fn execute(base: &ScenarioConfig, spec: &SweepSpec, out: &Path) -> Result<SweepResult> {
    let worlds: Vec<(u64, World)> = spec
        .seeds
        .par_iter()
        .map(|&seed| build_world(base, seed).map(|w| (seed, w)))
        .collect::<Result<_, _>>()?;
    let scenarios = spec.scenarios();
    let jobs: Vec<(usize, Scenario)> = (0..worlds.len())
        .flat_map(|w| scenarios.iter().map(move |s| (w, *s)))
        .collect();
    let finished: Vec<(u64, Scenario, PathBuf, RunSummary)> = jobs
        .par_iter()
        .map(|(w, s)| {
            let (seed, world) = &worlds[*w];
            let dir = run_dir(out, *seed, s);
            let cfg = s.apply(base);
            let result = rundir::run_into(&cfg, world, *seed, &dir)
                .with_context(|| format!("scenario {} (seed {seed})", s.name()))?;
            log::info!("finished {} seed {seed}", s.name());
            Ok((*seed, *s, dir, result.summary))
        })
        .collect::<Result<_>>()?;

    let baselines: BTreeMap<u64, RunSummary> = finished
        .iter()
        .filter(|(_, s, _, _)| s.delay_min.is_none())
        .map(|(seed, _, _, sum)| (*seed, sum.clone()))
        .collect();
    let mut outcomes = Vec::with_capacity(finished.len());
    for (seed, scenario, dir, summary) in finished {
        let loss = match baselines.get(&seed) {
            Some(b) => Some(pair_baseline(&summary, b)?),
            None => None,
        };
        outcomes.push(Outcome {
            scenario,
            seed,
            dir,
            summary,
            loss,
        });
    }
    let result = SweepResult { outcomes };
    result.write_tables(out)?;
    Ok(result)
}
