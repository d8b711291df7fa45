//! Request matching, charger choice, idle repositioning and fares.

use serde::{Deserialize, Serialize};

use crate::domain::{PortId, SevId, TravelTable, TripId, ZoneId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FareSchedule {
    pub per_mile_usd: f64,
    pub per_min_usd: f64,
}

impl Default for FareSchedule {
    fn default() -> Self {
        Self {
            per_mile_usd: 0.631,
            per_min_usd: 0.287,
        }
    }
}

impl FareSchedule {
    /// Fare in cents, rounded half-up.
    pub fn fare_cents(&self, miles: f64, minutes: f64) -> u64 {
        let usd = self.per_mile_usd * miles + self.per_min_usd * minutes;
        // the epsilon keeps values like 4.4475 from landing a hair below .5
        (usd * 100.0 + 0.5 + 1e-9).floor().max(0.0) as u64
    }

    pub fn fare(&self, miles: f64, minutes: f64) -> f64 {
        self.fare_cents(miles, minutes) as f64 / 100.0
    }
}

/// Soft-max of `logits`, shifted by the maximum for stability.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let w: Vec<f64> = logits.iter().map(|l| (l - m).exp()).collect();
    let total: f64 = w.iter().sum();
    w.into_iter().map(|x| x / total).collect()
}

/// Inverse-CDF pick with one uniform `u` in [0, 1).
pub fn sample_index(probs: &[f64], u: f64) -> usize {
    let mut acc = 0.0;
    for (i, p) in probs.iter().enumerate() {
        acc += p;
        if u < acc {
            return i;
        }
    }
    // rounding left u above the final cumulative sum
    probs.iter().rposition(|p| *p > 0.0).unwrap_or(0)
}

/// One open request as seen by the matcher.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OpenRequest {
    pub id: TripId,
    pub origin: ZoneId,
}

/// One available SEV at its current zone.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AvailableSev {
    pub id: SevId,
    pub zone: ZoneId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Assignment {
    pub request: TripId,
    pub sev: SevId,
    /// Pick-up travel time in minutes.
    pub eta: u32,
}

/// Sequential greedy matching: requests in the given order each take the
/// nearest unassigned SEV within `radius` minutes, ties to the lower SEV id.
pub fn greedy_match(
    requests: &[OpenRequest],
    sevs: &[AvailableSev],
    table: &TravelTable,
    radius: u32,
) -> Vec<Assignment> {
    let mut by_zone: Vec<Vec<SevId>> = vec![Vec::new(); table.n_zones()];
    for s in sevs {
        by_zone[s.zone].push(s.id);
    }
    for v in &mut by_zone {
        v.sort_unstable_by(|a, b| b.cmp(a));
    }
    let mut out = Vec::new();
    let mut remaining = sevs.len();
    for r in requests {
        if remaining == 0 {
            break;
        }
        let near = table.neighbours_within(r.origin, radius);
        let mut i = 0;
        while i < near.len() {
            let eta = near[i].0;
            let mut best: Option<(SevId, ZoneId)> = None;
            while i < near.len() && near[i].0 == eta {
                let z = near[i].1;
                if let Some(&id) = by_zone[z].last() {
                    if best.is_none_or(|(b, _)| id < b) {
                        best = Some((id, z));
                    }
                }
                i += 1;
            }
            if let Some((id, z)) = best {
                by_zone[z].pop();
                remaining -= 1;
                out.push(Assignment {
                    request: r.id,
                    sev: id,
                    eta,
                });
                break;
            }
        }
    }
    out
}

/// Reference implementation of [`greedy_match`] by exhaustive scan.
pub fn greedy_match_brute_force(
    requests: &[OpenRequest],
    sevs: &[AvailableSev],
    table: &TravelTable,
    radius: u32,
) -> Vec<Assignment> {
    let mut taken = vec![false; sevs.len()];
    let mut out = Vec::new();
    for r in requests {
        let mut best: Option<(u32, SevId, usize)> = None;
        for (k, s) in sevs.iter().enumerate() {
            if taken[k] {
                continue;
            }
            let t = table.get(s.zone, r.origin);
            if t <= radius && best.is_none_or(|b| (t, s.id) < (b.0, b.1)) {
                best = Some((t, s.id, k));
            }
        }
        if let Some((eta, sev, k)) = best {
            taken[k] = true;
            out.push(Assignment {
                request: r.id,
                sev,
                eta,
            });
        }
    }
    out
}

/// A port a SEV may drive to, with its expected queueing time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PortCandidate {
    pub id: PortId,
    pub zone: ZoneId,
    pub expected_wait_min: f64,
}

/// Charger-choice probabilities, logit `-q_j * t_ij`.
pub fn evse_probabilities(sev_zone: ZoneId, ports: &[PortCandidate], table: &TravelTable) -> Vec<f64> {
    let logits: Vec<f64> = ports
        .iter()
        .map(|p| -p.expected_wait_min * table.get(sev_zone, p.zone) as f64)
        .collect();
    softmax(&logits)
}

pub fn choose_evse(sev_zone: ZoneId, ports: &[PortCandidate], table: &TravelTable, u: f64) -> Result<PortId> {
    if ports.is_empty() {
        return Err(Error::NoEligiblePort);
    }
    let p = evse_probabilities(sev_zone, ports, table);
    Ok(ports[sample_index(&p, u)].id)
}

/// Repositioning probabilities over all zones, logit
/// `(N_order - N_idle) / t_ij` with the self-zone time floored at 1 minute.
pub fn reposition_probabilities(sev_zone: ZoneId, gaps: &[f64], table: &TravelTable) -> Vec<f64> {
    let logits: Vec<f64> = gaps
        .iter()
        .enumerate()
        .map(|(j, g)| g / table.get(sev_zone, j).max(1) as f64)
        .collect();
    softmax(&logits)
}

pub fn choose_reposition(sev_zone: ZoneId, gaps: &[f64], table: &TravelTable, u: f64) -> ZoneId {
    sample_index(&reposition_probabilities(sev_zone, gaps, table), u)
}

/// Trailing-window per-zone counts of pickups and idle SEVs.
#[derive(Debug, Clone)]
pub struct SupplyDemandTracker {
    window: usize,
    n_zones: usize,
    /// Ring of per-minute pickup counts, `window` slots of `n_zones`.
    pickups: Vec<u32>,
    idle: Vec<u32>,
    pickup_sum: Vec<u64>,
    idle_sum: Vec<u64>,
    /// Minute currently being filled.
    current: Option<u64>,
    observed_minutes: usize,
}

impl SupplyDemandTracker {
    pub fn new(n_zones: usize, window_min: u64) -> Self {
        let window = window_min.max(1) as usize;
        Self {
            window,
            n_zones,
            pickups: vec![0; window * n_zones],
            idle: vec![0; window * n_zones],
            pickup_sum: vec![0; n_zones],
            idle_sum: vec![0; n_zones],
            current: None,
            observed_minutes: 0,
        }
    }

    fn slot(&self, tick: u64) -> usize {
        (tick % self.window as u64) as usize * self.n_zones
    }

    /// Opens minute `tick`, evicting the slot that falls out of the window.
    pub fn begin_minute(&mut self, tick: u64) {
        if self.current == Some(tick) {
            return;
        }
        assert!(self.current.is_none_or(|c| tick > c), "tracker time must advance");
        let base = self.slot(tick);
        for z in 0..self.n_zones {
            self.pickup_sum[z] -= self.pickups[base + z] as u64;
            self.idle_sum[z] -= self.idle[base + z] as u64;
            self.pickups[base + z] = 0;
            self.idle[base + z] = 0;
        }
        // skipped minutes also age out
        if let Some(c) = self.current {
            for t in (c + 1)..tick {
                if tick - t >= self.window as u64 {
                    continue;
                }
                let b = self.slot(t);
                for z in 0..self.n_zones {
                    self.pickup_sum[z] -= self.pickups[b + z] as u64;
                    self.idle_sum[z] -= self.idle[b + z] as u64;
                    self.pickups[b + z] = 0;
                    self.idle[b + z] = 0;
                }
            }
        }
        self.current = Some(tick);
        self.observed_minutes = (self.observed_minutes + 1).min(self.window);
    }

    pub fn record_pickup(&mut self, zone: ZoneId) {
        let base = self.slot(self.current.expect("begin_minute first"));
        self.pickups[base + zone] += 1;
        self.pickup_sum[zone] += 1;
    }

    pub fn record_idle(&mut self, zone: ZoneId) {
        let base = self.slot(self.current.expect("begin_minute first"));
        self.idle[base + zone] += 1;
        self.idle_sum[zone] += 1;
    }

    /// Pickups in the trailing window.
    pub fn n_order(&self, zone: ZoneId) -> f64 {
        self.pickup_sum[zone] as f64
    }

    /// Mean idle SEV count over the observed minutes of the window.
    pub fn n_idle(&self, zone: ZoneId) -> f64 {
        if self.observed_minutes == 0 {
            0.0
        } else {
            self.idle_sum[zone] as f64 / self.observed_minutes as f64
        }
    }

    pub fn gaps(&self) -> Vec<f64> {
        (0..self.n_zones).map(|z| self.n_order(z) - self.n_idle(z)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{TravelTimeProvider, Zone};
    use crate::rng::{stream, Stream};
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use rand::seq::SliceRandom;
    use rand::Rng;

    fn line_table(n: usize, spacing: f64) -> TravelTable {
        let zones: Vec<Zone> = (0..n)
            .map(|i| Zone {
                id: i,
                x_miles: i as f64 * spacing,
                y_miles: 0.0,
            })
            .collect();
        TravelTable::build(&TravelTimeProvider::synthetic(&zones, 12.0)).unwrap()
    }

    #[test]
    fn fare_examples() {
        let f = FareSchedule::default();
        assert_eq!(f.fare_cents(0.0, 0.0), 0);
        assert_eq!(f.fare_cents(2.5, 10.0), 445);
        assert_eq!(f.fare_cents(10.0, 30.0), 1492);
        assert_abs_diff_eq!(f.fare(10.0, 30.0), 14.92);
    }

    #[test]
    fn match_within_radius_only() {
        // 1 mile = 5 min at 12 mph
        let t = line_table(7, 1.0);
        let req = [OpenRequest { id: 0, origin: 0 }];
        let near = [AvailableSev { id: 3, zone: 1 }];
        assert_eq!(greedy_match(&req, &near, &t, 20)[0].eta, 5);
        let far = [AvailableSev { id: 3, zone: 5 }];
        assert!(greedy_match(&req, &far, &t, 20).is_empty());
    }

    #[test]
    fn earlier_request_wins_and_ties_go_to_lower_id() {
        let t = line_table(3, 1.0);
        let reqs = [OpenRequest { id: 0, origin: 0 }, OpenRequest { id: 1, origin: 2 }];
        let sevs = [AvailableSev { id: 9, zone: 1 }];
        let a = greedy_match(&reqs, &sevs, &t, 20);
        assert_eq!(a.len(), 1);
        assert_eq!(a[0].request, 0);
        let sevs = [AvailableSev { id: 7, zone: 0 }, AvailableSev { id: 4, zone: 2 }, AvailableSev { id: 5, zone: 0 }];
        let a = greedy_match(&reqs[..1], &sevs, &t, 20);
        assert_eq!(a[0].sev, 5);
        let reqs = [OpenRequest { id: 0, origin: 1 }];
        // both 5 minutes away, lower id wins
        assert_eq!(greedy_match(&reqs, &sevs, &t, 20)[0].sev, 4);
    }

    #[test]
    fn greedy_equals_brute_force_on_random_instances() {
        let mut rng = stream(77, Stream::Mobility);
        let zones: Vec<Zone> = (0..12)
            .map(|i| Zone {
                id: i,
                x_miles: rng.random_range(0.0..5.0),
                y_miles: rng.random_range(0.0..5.0),
            })
            .collect();
        let t = TravelTable::build(&TravelTimeProvider::synthetic(&zones, 12.0)).unwrap();
        for _ in 0..200 {
            let nr = rng.random_range(0..=10);
            let ns = rng.random_range(0..=10);
            let reqs: Vec<_> = (0..nr).map(|i| OpenRequest { id: i, origin: rng.random_range(0..12) }).collect();
            let mut ids: Vec<usize> = (0..40).collect();
            ids.shuffle(&mut rng);
            let sevs: Vec<_> = ids[..ns].iter().map(|&id| AvailableSev { id, zone: rng.random_range(0..12) }).collect();
            let radius = rng.random_range(5..30);
            assert_eq!(
                greedy_match(&reqs, &sevs, &t, radius),
                greedy_match_brute_force(&reqs, &sevs, &t, radius)
            );
        }
    }

    fn frequencies(probs: &[f64], draws: usize, seed: u64) -> Vec<f64> {
        let mut rng = stream(seed, Stream::Mobility);
        let mut c = vec![0usize; probs.len()];
        for _ in 0..draws {
            c[sample_index(probs, rng.random())] += 1;
        }
        c.into_iter().map(|k| k as f64 / draws as f64).collect()
    }

    #[test]
    fn evse_choice_single_and_symmetric() {
        let t = line_table(3, 1.0);
        let one = [PortCandidate { id: 4, zone: 2, expected_wait_min: 10.0 }];
        assert_eq!(choose_evse(0, &one, &t, 0.999).unwrap(), 4);
        assert!(matches!(choose_evse(0, &[], &t, 0.5), Err(Error::NoEligiblePort)));
        let two = [
            PortCandidate { id: 0, zone: 0, expected_wait_min: 2.0 },
            PortCandidate { id: 1, zone: 2, expected_wait_min: 2.0 },
        ];
        let p = evse_probabilities(1, &two, &t);
        assert_abs_diff_eq!(p[0], 0.5, epsilon = 1e-12);
        let f = frequencies(&p, 10_000, 1);
        assert!((f[0] - 0.5).abs() < 0.03);
    }

    #[test]
    fn evse_choice_three_to_one() {
        let t = line_table(2, 1.0);
        // t = 5 min to zone 1; q chosen so q*t = ln 3
        let ports = [
            PortCandidate { id: 0, zone: 0, expected_wait_min: 4.0 },
            PortCandidate { id: 1, zone: 1, expected_wait_min: 3f64.ln() / 5.0 },
        ];
        let p = evse_probabilities(0, &ports, &t);
        assert_abs_diff_eq!(p[0], 0.75, epsilon = 1e-12);
        let f = frequencies(&p, 10_000, 2);
        assert!((f[0] - 0.75).abs() < 0.02);
    }

    #[test]
    fn reposition_split() {
        let t = line_table(3, 1.0);
        // zones 0 and 2 both 5 minutes from zone 1; gap on zone 0 is t ln 9
        let gaps = [5.0 * 9f64.ln(), -1e6, 0.0];
        let p = reposition_probabilities(1, &gaps, &t);
        assert_abs_diff_eq!(p[0], 0.9, epsilon = 1e-9);
        let f = frequencies(&p, 10_000, 3);
        assert!((f[0] - 0.9).abs() < 0.02);
        let single = line_table(1, 1.0);
        assert_eq!(choose_reposition(0, &[3.0], &single, 0.7), 0);
        let p = reposition_probabilities(0, &[0.0; 3], &t);
        assert!(p.iter().all(|x| (x - 1.0 / 3.0).abs() < 1e-12));
    }

    #[test]
    fn tracker_window_is_trailing() {
        let mut tr = SupplyDemandTracker::new(2, 15);
        tr.begin_minute(0);
        tr.record_pickup(1);
        tr.record_idle(0);
        tr.record_idle(0);
        assert_eq!(tr.n_order(1), 1.0);
        assert_eq!(tr.n_idle(0), 2.0);
        tr.begin_minute(14);
        assert_eq!(tr.n_order(1), 1.0);
        tr.begin_minute(15);
        assert_eq!(tr.n_order(1), 0.0);
        assert_eq!(tr.n_idle(0), 0.0);
        assert_eq!(tr.gaps(), vec![0.0, 0.0]);
    }

    proptest! {
        #[test]
        fn softmax_is_a_distribution(logits in proptest::collection::vec(-50.0f64..50.0, 1..20)) {
            let p = softmax(&logits);
            prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(p.iter().all(|x| *x > 0.0));
        }

        #[test]
        fn softmax_shift_invariant(logits in proptest::collection::vec(-50.0f64..50.0, 1..20), c in -100.0f64..100.0) {
            let a = softmax(&logits);
            let shifted: Vec<f64> = logits.iter().map(|l| l + c).collect();
            let b = softmax(&shifted);
            for (x, y) in a.iter().zip(&b) {
                prop_assert!((x - y).abs() < 1e-12);
            }
        }
    }
}
