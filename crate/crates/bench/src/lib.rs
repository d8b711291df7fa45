//! Fixtures shared by the benchmarks.

use esms_core::anomaly::ChargingFeature;
use esms_core::domain::TravelTable;
use esms_core::mobility::{AvailableSev, OpenRequest};
use esms_core::rng::{stream, Stream};
use esms_core::{ScenarioConfig, TravelTimeProvider, Zone};
use rand::Rng;

/// Desk preset shortened to `days` with a one-day warm-up.
pub fn short_desk(days: u64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.horizon_days = days;
    cfg.warmup_days = 1;
    cfg
}

/// Attack-free sessions that look like the simulator's charging log.
pub fn sessions(seed: u64, n: usize) -> Vec<ChargingFeature> {
    let mut rng = stream(seed, Stream::Detection);
    (0..n)
        .map(|_| {
            let c: f64 = rng.random_range(0.05..0.2);
            ChargingFeature::new(((0.78 - c) * 220.0 / 5.13).ceil(), rng.random_range(0.0..1440.0), c)
        })
        .collect()
}

/// A square grid of zones half a mile apart with its travel table.
pub fn grid(side: usize) -> TravelTable {
    let zones: Vec<Zone> = (0..side * side)
        .map(|id| Zone {
            id,
            x_miles: (id % side) as f64 * 0.5,
            y_miles: (id / side) as f64 * 0.5,
        })
        .collect();
    TravelTable::build(&TravelTimeProvider::synthetic(&zones, 12.0)).expect("grid travel table")
}

/// Random requests and SEVs scattered over `n_zones`.
pub fn matching_instance(seed: u64, n_zones: usize, requests: usize, sevs: usize) -> (Vec<OpenRequest>, Vec<AvailableSev>) {
    let mut rng = stream(seed, Stream::Mobility);
    let reqs = (0..requests)
        .map(|id| OpenRequest {
            id,
            origin: rng.random_range(0..n_zones),
        })
        .collect();
    let fleet = (0..sevs)
        .map(|id| AvailableSev {
            id,
            zone: rng.random_range(0..n_zones),
        })
        .collect();
    (reqs, fleet)
}
