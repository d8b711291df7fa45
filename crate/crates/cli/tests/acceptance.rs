//! Acceptance gate. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero when a hard criterion fails. Criterion 7 is reported but
//! does not gate.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use esms_cli::sweep::{run_sweep, SweepSpec};
use esms_core::anomaly::gmm::fit_em;
use esms_core::anomaly::stats::unsuccessful_search_length;
use esms_core::anomaly::{anomaly_score, kld, ChargingFeature, ConfusionTally, DetectorKind, GaussianMixture, IsolationForest};
use esms_core::domain::{TravelTable, TravelTimeProvider, Zone};
use esms_core::engine::{build_world, to_csv_string};
use esms_core::mobility::{
    evse_probabilities, greedy_match, greedy_match_brute_force, reposition_probabilities, sample_index, softmax,
    AvailableSev, FareSchedule, OpenRequest, PortCandidate,
};
use esms_core::rng::{stream, Stream};
use esms_core::{RunOutput, ScenarioConfig, World};
use rand::seq::SliceRandom;
use rand::Rng;
use rayon::prelude::*;

const SEEDS: [u64; 3] = [1, 2, 3];

struct Verdict {
    id: u8,
    title: &'static str,
    pass: bool,
    soft: bool,
    detail: String,
    elapsed: Duration,
}

/// Desk worlds per seed and a cache of finished runs keyed by scenario.
struct Lab {
    base: ScenarioConfig,
    worlds: Vec<(u64, World)>,
    runs: BTreeMap<String, Vec<Arc<RunOutput>>>,
}

impl Lab {
    fn new() -> Self {
        let base = ScenarioConfig::default();
        let worlds = SEEDS.iter().map(|&s| (s, build_world(&base, s).expect("desk world"))).collect();
        Self {
            base,
            worlds,
            runs: BTreeMap::new(),
        }
    }

    /// Runs every named scenario on all seeds, in parallel.
    fn prepare(&mut self, scenarios: Vec<(String, ScenarioConfig)>) {
        let jobs: Vec<(String, ScenarioConfig, usize)> = scenarios
            .into_iter()
            .filter(|(k, _)| !self.runs.contains_key(k))
            .flat_map(|(k, c)| (0..self.worlds.len()).map(move |w| (k.clone(), c.clone(), w)))
            .collect();
        let done: Vec<(String, Arc<RunOutput>)> = jobs
            .par_iter()
            .map(|(k, c, w)| {
                let (seed, world) = &self.worlds[*w];
                (k.clone(), Arc::new(esms_core::run(c, world, *seed).expect("desk run")))
            })
            .collect();
        for (k, out) in done {
            self.runs.entry(k).or_default().push(out);
        }
    }

    fn get(&self, key: &str) -> &[Arc<RunOutput>] {
        &self.runs[key]
    }

    fn scenario(&self, delay: Option<f64>, detector: Option<(DetectorKind, f64)>) -> ScenarioConfig {
        let mut c = self.base.clone();
        match delay {
            None => c.attack.enabled = false,
            Some(d) => {
                c.attack.enabled = true;
                c.attack.delay_mean_min = d;
            }
        }
        c.detector = detector.map(|(k, _)| k);
        c.detector_alpha = detector.map(|(_, a)| a);
        c
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

fn mean_revenue(runs: &[Arc<RunOutput>]) -> f64 {
    mean(runs.iter().map(|r| r.summary.weekly_revenue_usd))
}

fn mean_queue(runs: &[Arc<RunOutput>]) -> f64 {
    mean(runs.iter().map(|r| r.summary.final_window_mean_queue_time_min))
}

fn pooled_tally(runs: &[Arc<RunOutput>]) -> ConfusionTally {
    let mut t = ConfusionTally::default();
    for r in runs {
        t.merge(&r.summary.detection.as_ref().expect("detector ran").tally);
    }
    t
}

fn synthetic_sessions<R: Rng>(n: usize, rng: &mut R) -> Vec<ChargingFeature> {
    (0..n)
        .map(|_| {
            let c: f64 = rng.random_range(0.05..0.2);
            let target: f64 = rng.random_range(0.76..0.80);
            let d = ((target - c) * 220.0 / 5.13).ceil();
            ChargingFeature::new(d, rng.random_range(0.0..1440.0), c)
        })
        .collect()
}

fn matrix_table(n: usize, f: impl Fn(usize, usize) -> f64) -> TravelTable {
    let minutes = (0..n * n).map(|k| Some(f(k / n, k % n))).collect();
    TravelTable::build(&TravelTimeProvider::Matrix { n, minutes }).expect("travel table")
}

// 1
fn epidemic_conservation(lab: &mut Lab) -> (bool, String) {
    let mut pure_beta = lab.scenario(Some(10.0), None);
    pure_beta.attack.initial_state = esms_core::attack::InitialState::AllSusceptible;
    lab.prepare(vec![("pure-beta".into(), pure_beta)]);
    let mut epochs = 0usize;
    let mut conserved = true;
    let mut absorbing = true;
    for (key, runs) in &lab.runs {
        for r in runs {
            let n = r.summary.n_ports;
            for e in &r.summary.sir {
                epochs += 1;
                conserved &= e.n_s + e.n_i + e.n_r == n;
            }
            if r.summary.detection.is_none() && r.summary.attack_enabled {
                absorbing &= r.summary.sir.windows(2).all(|w| w[1].n_i >= w[0].n_i);
                absorbing &= r.summary.sir.iter().all(|e| e.n_r == 0);
            }
            let _ = key;
        }
    }
    let grown = lab.get("pure-beta").iter().all(|r| {
        let sir = &r.summary.sir;
        sir.first().is_some_and(|e| e.n_i < r.summary.n_ports) && sir.last().is_some_and(|e| e.n_i == r.summary.n_ports)
    });
    (
        conserved && absorbing && grown && epochs > 0,
        format!("{epochs} epochs checked; S+I+R conserved: {conserved}; I absorbing without detection: {absorbing}; pure-beta growth reaches all ports: {grown}"),
    )
}

// 2
fn delay_calibration(lab: &Lab) -> (bool, String) {
    let mut within = Vec::new();
    let mut paired = Vec::new();
    let mut infected = 0usize;
    for (att, base) in lab.get("d10").iter().zip(lab.get("baseline")) {
        // recount from the session CSV
        let text = to_csv_string(&att.sessions);
        let mut rdr = csv::Reader::from_reader(text.as_bytes());
        let hdr = rdr.headers().unwrap().clone();
        let col = |name: &str| hdr.iter().position(|h| h == name).unwrap();
        let (ti, ai, si, st) = (col("true_duration"), col("actual_duration"), col("port_state"), col("start_tick"));
        let launch = att.summary.warmup_days * esms_core::MINUTES_PER_DAY;
        let mut inflated = Vec::new();
        let mut infected_actual = Vec::new();
        for rec in rdr.records() {
            let rec = rec.unwrap();
            if &rec[si] == "I" {
                let t: f64 = rec[ti].parse().unwrap();
                let a: f64 = rec[ai].parse().unwrap();
                inflated.push(a - t);
                infected_actual.push(a);
            }
            let _ = st;
        }
        infected += inflated.len();
        within.push(mean(inflated.into_iter()));
        let clean = mean(
            base.sessions
                .iter()
                .filter(|s| s.start_tick >= launch)
                .map(|s| s.actual_duration as f64),
        );
        paired.push(mean(infected_actual.into_iter()) - clean);
    }
    let w = mean(within.iter().copied());
    let p = mean(paired.iter().copied());
    (
        (w - 10.0).abs() <= 0.5 && (p - 10.0).abs() <= 0.5 && infected >= 500,
        format!("{infected} infected sessions; inflation {w:.3} min within sessions, {p:.3} min against the paired baseline (target 10 +/- 0.5)"),
    )
}

// 3
fn monotonic_degradation(lab: &Lab) -> (bool, String) {
    let keys = ["baseline", "d5", "d10", "d15"];
    let rev: Vec<f64> = keys.iter().map(|k| mean_revenue(lab.get(k))).collect();
    let q: Vec<f64> = keys.iter().map(|k| mean_queue(lab.get(k))).collect();
    let rev_ok = rev.windows(2).all(|w| w[0] > w[1]);
    let q_ok = q.windows(2).all(|w| w[0] < w[1]);
    (
        rev_ok && q_ok,
        format!(
            "weekly revenue {} ; mean queue {} (baseline, 5, 10, 15 min)",
            rev.iter().map(|r| format!("${r:.0}")).collect::<Vec<_>>().join(" > "),
            q.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(" < ")
        ),
    )
}

// 4
fn mitigation_direction(lab: &Lab) -> (bool, String) {
    let no_ad = mean_revenue(lab.get("d10"));
    let mut ok = true;
    let mut parts = Vec::new();
    for k in DetectorKind::ALL {
        let runs = lab.get(&format!("d10-{}-mid", k.label()));
        let rev = mean_revenue(runs);
        let cost_ok = runs.iter().all(|r| r.summary.repair_cost_usd > 0.0);
        let within = rev >= no_ad * 0.99;
        ok &= within && cost_ok;
        parts.push(format!(
            "{} {:+.2}% repair ${:.0}",
            k.label(),
            100.0 * (rev - no_ad) / no_ad,
            mean(runs.iter().map(|r| r.summary.repair_cost_usd))
        ));
    }
    (ok, format!("vs no detection (${no_ad:.0}): {}", parts.join(", ")))
}

// 5
fn micro_oracles() -> (bool, String) {
    let k = kld(&[0.5, 0.5], &[0.9, 0.1]);
    let c256 = unsuccessful_search_length(256);
    let s = anomaly_score(c256, 256);
    let eye = [[1.0, 0.0, 0.0], [0.0, 1.0, 0.0], [0.0, 0.0, 1.0]];
    let g = GaussianMixture::new(&[(1.0, [0.0; 3], eye)]).unwrap().density(&[0.0; 3]);
    let gauss = (2.0 * std::f64::consts::PI).powf(-1.5);
    let f1 = ConfusionTally {
        tp: 8,
        fp: 2,
        fn_: 1,
        tn: 9,
    }
    .evaluate()
    .f1;
    let mut worst_step = f64::INFINITY;
    for seed in 0..5 {
        let mut rng = stream(100 + seed, Stream::Detection);
        let pts: Vec<[f64; 3]> = (0..600)
            .map(|i| {
                let c = (i % 3) as f64 * 4.0;
                [c + rng.random::<f64>(), c - rng.random::<f64>(), rng.random::<f64>() * (1.0 + c)]
            })
            .collect();
        let fit = fit_em(&pts, 3, 200, 0.0, &mut rng).unwrap();
        for w in fit.log_likelihood.windows(2) {
            worst_step = worst_step.min(w[1] - w[0]);
        }
    }
    let ok = (k - 0.5108).abs() <= 1e-3
        && (s - 0.5).abs() < 1e-12
        && (g - gauss).abs() <= 1e-6
        && (f1 - 0.8421).abs() <= 1e-4
        && worst_step >= -1e-9;
    (
        ok,
        format!("KLD {k:.4}; IF score {s:.3}; GMM density {g:.8} vs {gauss:.8}; F1 {f1:.4}; worst EM step {worst_step:.2e}"),
    )
}

// 6
fn detector_calibration(lab: &Lab) -> (bool, String) {
    let mut rng = stream(600, Stream::Detection);
    let train = synthetic_sessions(5000, &mut rng);
    let held_out = synthetic_sessions(1000, &mut rng);
    let mut if_ok = true;
    let mut if_parts = Vec::new();
    for alpha in [DetectorKind::IsolationForest.default_alpha(), DetectorKind::IsolationForest.mid_alpha()] {
        let forest = IsolationForest::fit(&train, 100, 256, alpha, &mut rng);
        let rate = held_out.iter().filter(|x| forest.is_outlier(x)).count() as f64 / held_out.len() as f64;
        if_ok &= (rate - alpha).abs() <= 0.02;
        if_parts.push(format!("{rate:.3} at {alpha}"));
    }
    let mut port_ok = true;
    let mut parts = Vec::new();
    for k in DetectorKind::ALL {
        let t = pooled_tally(lab.get(&format!("clean-{}-default", k.label())));
        let epochs: u64 = lab
            .get(&format!("clean-{}-default", k.label()))
            .iter()
            .map(|r| r.summary.detection.as_ref().unwrap().epochs)
            .sum();
        let rate = t.fp as f64 / (t.fp + t.tn).max(1) as f64;
        port_ok &= rate <= 0.10 && epochs >= 100 && t.tp + t.fn_ == 0;
        parts.push(format!("{} {rate:.3}", k.label()));
    }
    (
        if_ok && port_ok,
        format!("IF per-sample rate {}; clean port false alarms at default sensitivity: {}", if_parts.join(", "), parts.join(", ")),
    )
}

// 7
fn detection_ordering(lab: &Lab) -> (bool, String) {
    let score = |k: DetectorKind| pooled_tally(lab.get(&format!("d10-{}-mid", k.label()))).evaluate();
    let s: BTreeMap<&str, _> = DetectorKind::ALL.iter().map(|&k| (k.label(), score(k))).collect();
    let f1 = |k: &str| s[k].f1;
    let ok = ["KLD", "PCC"]
        .iter()
        .all(|k| f1(k) >= f1("GMM") - 0.02 && f1(k) >= f1("IF") - 0.02)
        && s["KLD"].recall >= 0.9;
    (
        ok,
        format!(
            "F1 {}; recall(KLD) {:.3}",
            s.iter().map(|(k, v)| format!("{k} {:.3}", v.f1)).collect::<Vec<_>>().join(", "),
            s["KLD"].recall
        ),
    )
}

// 8
fn choice_laws() -> (bool, String) {
    let mut rng = stream(800, Stream::Mobility);
    let mut worst_sum = 0f64;
    let table = matrix_table(8, |i, j| (i as f64 - j as f64).abs() * 3.0);
    for _ in 0..1000 {
        let logits: Vec<f64> = (0..rng.random_range(1..12)).map(|_| rng.random_range(-50.0..50.0)).collect();
        worst_sum = worst_sum.max((softmax(&logits).iter().sum::<f64>() - 1.0).abs());
        let ports: Vec<PortCandidate> = (0..rng.random_range(1..8))
            .map(|id| PortCandidate {
                id,
                zone: rng.random_range(0..8),
                expected_wait_min: rng.random_range(0.0..60.0),
            })
            .collect();
        let p = evse_probabilities(rng.random_range(0..8), &ports, &table);
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
        let gaps: Vec<f64> = (0..8).map(|_| rng.random_range(-10.0..10.0)).collect();
        let p = reposition_probabilities(rng.random_range(0..8), &gaps, &table);
        worst_sum = worst_sum.max((p.iter().sum::<f64>() - 1.0).abs());
    }

    // fixtures: analytic probabilities and the choice model's own output
    let near = matrix_table(3, |i, j| if i == j { 0.0 } else { 2.0 });
    let port = |id, wait| PortCandidate {
        id,
        zone: id,
        expected_wait_min: wait,
    };
    let fixtures: Vec<(&str, Vec<f64>, Vec<f64>)> = vec![
        (
            "charger 0 vs ln 3",
            evse_probabilities(0, &[port(1, 0.0), port(2, 3f64.ln() / 2.0)], &near),
            vec![0.75, 0.25],
        ),
        (
            "charger symmetric",
            evse_probabilities(0, &[port(1, 5.0), port(2, 5.0)], &near),
            vec![0.5, 0.5],
        ),
        (
            "reposition ln 9",
            reposition_probabilities(0, &[-1e9, 2.0 * 9f64.ln(), 0.0], &near),
            vec![0.0, 0.9, 0.1],
        ),
    ];
    let mut worst_freq = 0f64;
    let mut worst_analytic = 0f64;
    for (i, (_, p, expect)) in fixtures.iter().enumerate() {
        let mut rng = stream(810 + i as u64, Stream::Mobility);
        let mut counts = vec![0usize; p.len()];
        for _ in 0..10_000 {
            counts[sample_index(p, rng.random())] += 1;
        }
        for j in 0..p.len() {
            worst_analytic = worst_analytic.max((p[j] - expect[j]).abs());
            worst_freq = worst_freq.max((counts[j] as f64 / 10_000.0 - expect[j]).abs());
        }
    }
    (
        worst_sum <= 1e-12 && worst_analytic <= 1e-9 && worst_freq <= 0.02,
        format!("max |sum - 1| {worst_sum:.1e}; fixture probabilities off by {worst_analytic:.1e}; sampling off by at most {worst_freq:.4}"),
    )
}

// 9
fn matching_oracle() -> (bool, String) {
    let mut rng = stream(900, Stream::Mobility);
    let mut agree = 0;
    let mut invariants = true;
    for _ in 0..200 {
        let nz = rng.random_range(2..15);
        let zones: Vec<Zone> = (0..nz)
            .map(|id| Zone {
                id,
                x_miles: rng.random_range(0.0..6.0),
                y_miles: rng.random_range(0.0..6.0),
            })
            .collect();
        let table = TravelTable::build(&TravelTimeProvider::synthetic(&zones, 12.0)).unwrap();
        let reqs: Vec<OpenRequest> = (0..rng.random_range(0..=10))
            .map(|id| OpenRequest {
                id,
                origin: rng.random_range(0..nz),
            })
            .collect();
        let mut ids: Vec<usize> = (0..30).collect();
        ids.shuffle(&mut rng);
        let sevs: Vec<AvailableSev> = ids[..rng.random_range(0..=10)]
            .iter()
            .map(|&id| AvailableSev {
                id,
                zone: rng.random_range(0..nz),
            })
            .collect();
        let radius = rng.random_range(3..25);
        let got = greedy_match(&reqs, &sevs, &table, radius);
        if got == greedy_match_brute_force(&reqs, &sevs, &table, radius) {
            agree += 1;
        }
        let mut used: Vec<usize> = got.iter().map(|a| a.sev).collect();
        used.sort_unstable();
        used.dedup();
        invariants &= used.len() == got.len() && got.iter().all(|a| a.eta <= radius);
    }
    (agree == 200 && invariants, format!("{agree}/200 instances agree; no SEV reused, radius respected: {invariants}"))
}

// 10
fn determinism(lab: &Lab) -> (bool, String) {
    let cfg = lab.scenario(Some(10.0), Some((DetectorKind::Kld, DetectorKind::Kld.mid_alpha())));
    let (seed, world) = &lab.worlds[0];
    let a = esms_core::run(&cfg, world, *seed).unwrap();
    let b = esms_core::run(&cfg, world, *seed).unwrap();
    let same_run = to_csv_string(&a.metrics) == to_csv_string(&b.metrics)
        && to_csv_string(&a.sessions) == to_csv_string(&b.sessions);

    let dirs = [tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap()];
    let spec = SweepSpec::paper_grid(vec![SEEDS[0]]);
    run_sweep(&lab.base, &spec, dirs[0].path(), Some(1)).unwrap();
    run_sweep(&lab.base, &spec, dirs[1].path(), Some(4)).unwrap();
    let files = |root: &Path| -> BTreeMap<String, Vec<u8>> {
        walkdir::WalkDir::new(root)
            .into_iter()
            .map(|e| e.unwrap())
            .filter(|e| e.file_type().is_file())
            .map(|e| {
                let rel = e.path().strip_prefix(root).unwrap().to_string_lossy().into_owned();
                (rel, std::fs::read(e.path()).unwrap())
            })
            .collect()
    };
    let (one, four) = (files(dirs[0].path()), files(dirs[1].path()));
    let csvs = one.keys().filter(|k| k.ends_with("metrics.csv") || k.ends_with("sessions.csv")).count();
    let same_sweep = one == four && csvs == 2 * 19;
    (
        same_run && same_sweep,
        format!(
            "repeat run identical: {same_run}; sweep on 1 and 4 threads identical across {} files: {same_sweep}",
            one.len()
        ),
    )
}

// 11
fn economics(lab: &Lab) -> (bool, String) {
    let fares = FareSchedule::default();
    let mut ok = true;
    let mut trips = 0usize;
    let mut visits = 0u64;
    for (key, runs) in &lab.runs {
        for r in runs {
            let s = &r.summary;
            let recount: u64 = r.trips.iter().map(|t| t.fare_cents).sum();
            ok &= recount == s.total_revenue_cents;
            ok &= r
                .trips
                .iter()
                .all(|t| fares.fare_cents(t.distance_miles, t.in_vehicle_min as f64) == t.fare_cents);
            ok &= s.repair_cost_cents == 178 * s.repair_visits;
            ok &= (s.repair_cost_usd - 1.78 * s.repair_visits as f64).abs() < 1e-9;
            ok &= r.epidemic.iter().map(|e| e.repair_visits).sum::<u64>() == s.repair_visits;
            trips += r.trips.len();
            visits += s.repair_visits;
            let _ = key;
        }
    }
    (
        ok && visits > 0,
        format!("{trips} trips and {visits} repair visits recounted exactly"),
    )
}

fn main() {
    let started = Instant::now();
    let mut lab = Lab::new();
    let mut scenarios = vec![("baseline".to_string(), lab.scenario(None, None))];
    for d in [5.0, 10.0, 15.0] {
        scenarios.push((format!("d{d}"), lab.scenario(Some(d), None)));
    }
    for k in DetectorKind::ALL {
        scenarios.push((
            format!("d10-{}-mid", k.label()),
            lab.scenario(Some(10.0), Some((k, k.mid_alpha()))),
        ));
        scenarios.push((
            format!("clean-{}-default", k.label()),
            lab.scenario(None, Some((k, k.default_alpha()))),
        ));
    }
    lab.prepare(scenarios);
    let prepared = started.elapsed();

    let mut verdicts = Vec::new();
    let mut check = |id, title, soft, f: &mut dyn FnMut() -> (bool, String)| {
        let t = Instant::now();
        let (pass, detail) = f();
        verdicts.push(Verdict {
            id,
            title,
            pass,
            soft,
            detail,
            elapsed: t.elapsed(),
        });
    };
    check(1, "epidemic conservation and absorption", false, &mut || epidemic_conservation(&mut lab));
    check(2, "delay injection calibration", false, &mut || delay_calibration(&lab));
    check(3, "monotonic degradation", false, &mut || monotonic_degradation(&lab));
    check(4, "detection mitigation direction", false, &mut || mitigation_direction(&lab));
    check(5, "detector micro-oracles", false, &mut micro_oracles);
    check(6, "detector calibration", false, &mut || detector_calibration(&lab));
    check(7, "detection quality ordering (soft)", true, &mut || detection_ordering(&lab));
    check(8, "choice-model laws", false, &mut choice_laws);
    check(9, "matching oracle", false, &mut matching_oracle);
    check(10, "determinism", false, &mut || determinism(&lab));
    check(11, "economics recount", false, &mut || economics(&lab));

    println!("\nacceptance ({} desk runs prepared in {:.1}s)", lab.runs.values().map(Vec::len).sum::<usize>(), prepared.as_secs_f64());
    let mut hard_failures = 0;
    for v in &verdicts {
        let status = match (v.pass, v.soft) {
            (true, _) => "PASS",
            (false, false) => "FAIL",
            (false, true) => "FAIL (soft, not gating)",
        };
        println!("criterion {:>2} {status}: {} [{:.2}s] {}", v.id, v.title, v.elapsed.as_secs_f64(), v.detail);
        if !v.pass && !v.soft {
            hard_failures += 1;
        }
    }
    println!("total {:.1}s", started.elapsed().as_secs_f64());
    if hard_failures > 0 {
        println!("{hard_failures} criterion(s) failed");
        std::process::exit(1);
    }
}
