use esms_core::anomaly::DetectorKind;
use esms_core::engine::{build_world, to_csv_string};
use esms_core::{pair_baseline, run, RunOutput, ScenarioConfig};

fn small(delay: Option<f64>) -> ScenarioConfig {
    let mut c = ScenarioConfig::default();
    c.fleet_size = 40;
    c.world.n_zones = 25;
    c.world.n_ports = 8;
    c.world.demand_rate_per_min = 2.5;
    c.horizon_days = 3;
    c.warmup_days = 1;
    match delay {
        Some(d) => c.attack.delay_mean_min = d,
        None => c.attack.enabled = false,
    }
    c
}

fn go(cfg: &ScenarioConfig, seed: u64) -> RunOutput {
    let world = build_world(cfg, seed).unwrap();
    run(cfg, &world, seed).unwrap()
}

#[test]
fn fleet_and_requests_are_conserved_every_tick() {
    let cfg = small(Some(10.0));
    let out = go(&cfg, 11);
    assert!(!out.metrics.is_empty());
    for m in &out.metrics {
        let statuses = m.idle + m.cruising + m.dispatching + m.occupied + m.to_charger + m.queued + m.charging + m.stranded;
        assert_eq!(statuses, cfg.fleet_size, "tick {}", m.tick);
        let requests = m.open_requests as u64 + m.assigned_requests as u64 + m.fulfilled_total + m.expired_total;
        assert_eq!(requests, m.arrived_total, "tick {}", m.tick);
        assert_eq!(m.n_s + m.n_i + m.n_r, cfg.world.n_ports);
        assert!((0.0..=1.0).contains(&m.fulfillment_rate));
    }
    for w in out.metrics.windows(2) {
        assert_eq!(w[1].tick, w[0].tick + 1);
        assert!(w[1].revenue_usd >= w[0].revenue_usd);
    }
}

#[test]
fn revenue_matches_the_trip_log() {
    let out = go(&small(Some(10.0)), 12);
    let recount: u64 = out.trips.iter().map(|t| t.fare_cents).sum();
    assert_eq!(recount, out.summary.total_revenue_cents);
    assert!(out.trips.iter().all(|t| t.pickup_tick >= t.request_tick && t.dropoff_tick >= t.pickup_tick));
}

#[test]
fn sessions_are_well_formed() {
    let out = go(&small(Some(10.0)), 13);
    assert!(!out.sessions.is_empty());
    for s in &out.sessions {
        assert!(s.start_tick >= s.enqueue_tick);
        assert!(s.true_duration > 0);
        assert!(s.actual_duration >= s.true_duration);
        if !s.infected() {
            assert_eq!(s.actual_duration, s.true_duration);
        }
    }
}

#[test]
fn attack_raises_queueing_and_lowers_revenue() {
    let base = small(None);
    let attacked = small(Some(15.0));
    let mut q = (0.0, 0.0);
    for seed in [1, 2, 3] {
        let b = go(&base, seed);
        let a = go(&attacked, seed);
        q.0 += b.summary.final_window_mean_queue_time_min;
        q.1 += a.summary.final_window_mean_queue_time_min;
        let loss = pair_baseline(&a.summary, &b.summary).unwrap();
        assert!(loss.loss_pct.is_finite());
    }
    assert!(q.1 >= q.0, "attacked queue {} vs baseline {}", q.1, q.0);
}

#[test]
fn detection_does_not_change_demand() {
    let plain = small(Some(10.0));
    let mut watched = plain.clone();
    watched.detector = Some(DetectorKind::Kld);
    let a = go(&plain, 21);
    let b = go(&watched, 21);
    assert_eq!(
        a.metrics.iter().map(|m| m.arrived_total).collect::<Vec<_>>(),
        b.metrics.iter().map(|m| m.arrived_total).collect::<Vec<_>>()
    );
    assert!(b.summary.detection.is_some());
    let tally = &b.summary.detection.as_ref().unwrap().tally;
    // only ports with a full batch are scored
    let min = watched.detector_params.min_batch;
    let scored: Vec<_> = b.detections.iter().filter(|d| d.batch_size >= min).collect();
    assert_eq!(tally.total() as usize, scored.len());
    let tp = scored.iter().filter(|d| d.flag == 1 && d.truth == 1).count() as u64;
    assert_eq!(tally.tp, tp);
}

#[test]
fn repeat_runs_are_byte_identical() {
    let cfg = small(Some(10.0));
    let a = go(&cfg, 5);
    let b = go(&cfg, 5);
    assert_eq!(to_csv_string(&a.metrics), to_csv_string(&b.metrics));
    assert_eq!(to_csv_string(&a.sessions), to_csv_string(&b.sessions));
    assert_eq!(
        serde_json::to_string(&a.summary).unwrap(),
        serde_json::to_string(&b.summary).unwrap()
    );
}
