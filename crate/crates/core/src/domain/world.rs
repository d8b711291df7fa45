//! Desk-scale world synthesis.
//!
//! Zones sit on a hexagonal lattice grown ring by ring around the origin.
//! Demand is a per-minute Poisson process whose rate follows a 24-hour
//! multiplier with a morning and an evening peak (see [`demand_multiplier`]).
//! Origins and destinations are drawn with a centre-weighted zone
//! popularity so that repositioning has something to chase.

use rand::Rng;
use rand_distr::{Distribution, Poisson};
use serde::{Deserialize, Serialize};

use crate::domain::{PortId, TravelTimeProvider, TripRequest, TripStatus, Zone, ZoneId};
use crate::{Error, Result, MINUTES_PER_DAY};

/// Charging port location.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PortSite {
    pub port_id: PortId,
    pub zone_id: ZoneId,
}

/// Everything a run needs besides its configuration.
#[derive(Debug, Clone)]
pub struct World {
    pub zones: Vec<Zone>,
    pub ports: Vec<PortSite>,
    /// Sorted by request tick, ids contiguous from 0.
    pub trips: Vec<TripRequest>,
    pub travel: TravelTimeProvider,
}

impl World {
    pub fn validate(&self) -> Result<()> {
        let n = self.zones.len();
        if n == 0 {
            return Err(Error::InvalidWorld("no zones".into()));
        }
        for (i, z) in self.zones.iter().enumerate() {
            if z.id != i {
                return Err(Error::InvalidWorld(format!(
                    "zone ids must be contiguous from 0, found {} at position {i}",
                    z.id
                )));
            }
            if !z.x_miles.is_finite() || !z.y_miles.is_finite() {
                return Err(Error::InvalidWorld(format!("zone {i} has a non-finite centroid")));
            }
        }
        if self.travel.n_zones() != n {
            return Err(Error::InvalidWorld(format!(
                "travel times cover {} zones, world has {n}",
                self.travel.n_zones()
            )));
        }
        for (i, p) in self.ports.iter().enumerate() {
            if p.port_id != i {
                return Err(Error::InvalidWorld(format!(
                    "port ids must be contiguous from 0, found {} at position {i}",
                    p.port_id
                )));
            }
            if p.zone_id >= n {
                return Err(Error::UnknownZone { zone: p.zone_id, n_zones: n });
            }
        }
        for t in &self.trips {
            for z in [t.origin, t.destination] {
                if z >= n {
                    return Err(Error::UnknownZone { zone: z, n_zones: n });
                }
            }
        }
        Ok(())
    }

    /// Stable FNV-1a digest of the world contents, used to refuse pairing
    /// runs that were made on different worlds.
    pub fn fingerprint(&self) -> String {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |bytes: &[u8]| {
            for b in bytes {
                h ^= u64::from(*b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for z in &self.zones {
            eat(&z.x_miles.to_le_bytes());
            eat(&z.y_miles.to_le_bytes());
        }
        for p in &self.ports {
            eat(&(p.zone_id as u64).to_le_bytes());
        }
        for t in &self.trips {
            eat(&t.request_tick.to_le_bytes());
            eat(&(t.origin as u64).to_le_bytes());
            eat(&(t.destination as u64).to_le_bytes());
            eat(&t.distance_miles.to_le_bytes());
        }
        format!("{h:016x}")
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticWorldParams {
    pub n_zones: usize,
    pub n_ports: usize,
    /// Mean requests per minute averaged over a day.
    pub demand_rate_per_min: f64,
    pub horizon_min: u64,
    /// Centre-to-centre distance of neighbouring hexagons.
    pub zone_spacing_miles: f64,
    pub speed_mph: f64,
}

/// Time-of-day demand multiplier, normalised to a daily mean of 1.
///
/// Shape: a flat base of 0.25 plus a morning bump centred at 08:30
/// (height 1.0, sd 1.5 h) and an evening bump centred at 19:00
/// (height 1.3, sd 2.5 h), with hour distances taken on the 24-h circle.
pub fn demand_multiplier(minute_of_day: u64) -> f64 {
    raw_profile(minute_of_day as f64 / 60.0) / profile_mean()
}

fn raw_profile(hour: f64) -> f64 {
    fn bump(hour: f64, centre: f64, sd: f64) -> f64 {
        let d = (hour - centre).rem_euclid(24.0);
        let d = d.min(24.0 - d);
        (-0.5 * (d / sd).powi(2)).exp()
    }
    0.25 + 1.0 * bump(hour, 8.5, 1.5) + 1.3 * bump(hour, 19.0, 2.5)
}

fn profile_mean() -> f64 {
    (0..MINUTES_PER_DAY)
        .map(|m| raw_profile(m as f64 / 60.0))
        .sum::<f64>()
        / MINUTES_PER_DAY as f64
}

/// Axial hex coordinates in spiral order: centre, then ring 1, ring 2, ...
fn hex_spiral(n: usize) -> Vec<(i64, i64)> {
    const DIRS: [(i64, i64); 6] = [(1, 0), (1, -1), (0, -1), (-1, 0), (-1, 1), (0, 1)];
    let mut out = vec![(0, 0)];
    let mut radius = 1;
    while out.len() < n {
        // start at the "south-west" corner of the ring and walk its six sides
        let (mut q, mut r) = (-radius, radius);
        for dir in DIRS {
            for _ in 0..radius {
                out.push((q, r));
                q += dir.0;
                r += dir.1;
            }
        }
        radius += 1;
    }
    out.truncate(n);
    out
}

fn weighted_pick<R: Rng + ?Sized>(cumulative: &[f64], rng: &mut R) -> usize {
    let total = *cumulative.last().expect("non-empty weights");
    let u = rng.random::<f64>() * total;
    cumulative.partition_point(|&c| c <= u).min(cumulative.len() - 1)
}

pub fn generate_synthetic_world<R: Rng + ?Sized>(
    params: &SyntheticWorldParams,
    rng: &mut R,
) -> Result<World> {
    let SyntheticWorldParams {
        n_zones,
        n_ports,
        demand_rate_per_min,
        horizon_min,
        zone_spacing_miles: spacing,
        speed_mph,
    } = *params;
    if n_zones == 0 || n_ports == 0 {
        return Err(Error::InvalidWorld("zone and port counts must be positive".into()));
    }
    if n_ports > n_zones {
        return Err(Error::InvalidWorld(format!(
            "{n_ports} ports cannot be placed on {n_zones} distinct zones"
        )));
    }
    if !(demand_rate_per_min >= 0.0) || !(spacing > 0.0) || !(speed_mph > 0.0) {
        return Err(Error::InvalidWorld(
            "demand rate must be >= 0, spacing and speed > 0".into(),
        ));
    }

    let sqrt3 = 3f64.sqrt();
    let zones: Vec<Zone> = hex_spiral(n_zones)
        .into_iter()
        .enumerate()
        .map(|(id, (q, r))| Zone {
            id,
            x_miles: spacing * (q as f64 + r as f64 / 2.0),
            y_miles: spacing * (sqrt3 / 2.0 * r as f64),
        })
        .collect();

    // uniformly sampled zone subset, one port per zone, ordered by zone id
    let mut port_zones = rand::seq::index::sample(rng, n_zones, n_ports).into_vec();
    port_zones.sort_unstable();
    let ports = port_zones
        .into_iter()
        .enumerate()
        .map(|(port_id, zone_id)| PortSite { port_id, zone_id })
        .collect();

    let max_r = zones
        .iter()
        .map(|z| z.x_miles.hypot(z.y_miles))
        .fold(0.0, f64::max)
        .max(spacing);
    let mut cumulative = Vec::with_capacity(n_zones);
    let mut acc = 0.0;
    for z in &zones {
        acc += 0.3 + (-2.0 * z.x_miles.hypot(z.y_miles) / max_r).exp();
        cumulative.push(acc);
    }

    let mut trips = Vec::new();
    if demand_rate_per_min > 0.0 {
        for minute in 0..horizon_min {
            let lambda = demand_rate_per_min * demand_multiplier(minute % MINUTES_PER_DAY);
            let count = Poisson::new(lambda)
                .map(|p| p.sample(rng) as u64)
                .unwrap_or(0);
            for _ in 0..count {
                let origin = weighted_pick(&cumulative, rng);
                let destination = weighted_pick(&cumulative, rng);
                let straight = zones[origin].distance_to(&zones[destination]);
                let distance_miles = if origin == destination {
                    spacing * rng.random_range(0.25..0.75)
                } else {
                    straight * 1.25
                };
                trips.push(TripRequest {
                    id: trips.len(),
                    request_tick: minute,
                    origin,
                    destination,
                    distance_miles,
                    status: TripStatus::Open,
                });
            }
        }
    }

    let travel = TravelTimeProvider::synthetic(&zones, speed_mph);
    let world = World {
        zones,
        ports,
        trips,
        travel,
    };
    world.validate()?;
    Ok(world)
}
