use crate::domain::{Zone, ZoneId};
use crate::{Error, Result};

/// Zone-to-zone travel times in minutes.
#[derive(Debug, Clone, PartialEq)]
pub enum TravelTimeProvider {
    /// Square row-major matrix ordered by zone id. `None` marks a missing entry.
    Matrix { n: usize, minutes: Vec<Option<f64>> },
    /// Straight-line distance between centroids at a constant speed.
    Synthetic {
        centroids: Vec<(f64, f64)>,
        speed_mph: f64,
    },
}

impl TravelTimeProvider {
    pub fn synthetic(zones: &[Zone], speed_mph: f64) -> Self {
        assert!(speed_mph > 0.0, "speed must be positive");
        TravelTimeProvider::Synthetic {
            centroids: zones.iter().map(|z| (z.x_miles, z.y_miles)).collect(),
            speed_mph,
        }
    }

    pub fn n_zones(&self) -> usize {
        match self {
            TravelTimeProvider::Matrix { n, .. } => *n,
            TravelTimeProvider::Synthetic { centroids, .. } => centroids.len(),
        }
    }

    pub fn travel_time(&self, i: ZoneId, j: ZoneId) -> Result<f64> {
        let n = self.n_zones();
        for z in [i, j] {
            if z >= n {
                return Err(Error::UnknownZone { zone: z, n_zones: n });
            }
        }
        match self {
            TravelTimeProvider::Matrix { minutes, .. } => minutes[i * n + j]
                .ok_or(Error::MissingTravelTime { from: i, to: j }),
            TravelTimeProvider::Synthetic {
                centroids,
                speed_mph,
            } => {
                if i == j {
                    return Ok(0.0);
                }
                let (a, b) = (centroids[i], centroids[j]);
                let miles = (a.0 - b.0).hypot(a.1 - b.1);
                // the epsilon keeps exact multiples (1 mi at 12 mph) from rounding up
                Ok((miles * 60.0 / speed_mph - 1e-9).ceil().max(0.0))
            }
        }
    }
}

/// Whole-minute travel times precomputed for the tick loop, plus the
/// per-zone neighbour lists used by request matching.
#[derive(Debug, Clone)]
pub struct TravelTable {
    n: usize,
    ticks: Vec<u32>,
}

impl TravelTable {
    pub fn build(provider: &TravelTimeProvider) -> Result<Self> {
        let n = provider.n_zones();
        let mut ticks = Vec::with_capacity(n * n);
        for i in 0..n {
            for j in 0..n {
                let t = provider.travel_time(i, j)?;
                if !t.is_finite() || t < 0.0 {
                    return Err(Error::InvalidWorld(format!(
                        "travel time ({i}, {j}) = {t} is not a finite non-negative number"
                    )));
                }
                ticks.push((t - 1e-9).ceil().max(0.0) as u32);
            }
        }
        Ok(Self { n, ticks })
    }

    pub fn n_zones(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, i: ZoneId, j: ZoneId) -> u32 {
        self.ticks[i * self.n + j]
    }

    /// Zones reachable from `origin` within `radius` minutes, sorted by
    /// travel time then zone id.
    pub fn neighbours_within(&self, origin: ZoneId, radius: u32) -> Vec<(u32, ZoneId)> {
        let mut out: Vec<(u32, ZoneId)> = (0..self.n)
            .filter_map(|z| {
                let t = self.get(z, origin);
                (t <= radius).then_some((t, z))
            })
            .collect();
        out.sort_unstable();
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line_zones(xs: &[f64]) -> Vec<Zone> {
        xs.iter()
            .enumerate()
            .map(|(id, &x)| Zone {
                id,
                x_miles: x,
                y_miles: 0.0,
            })
            .collect()
    }

    #[test]
    fn same_zone_is_zero() {
        let p = TravelTimeProvider::synthetic(&line_zones(&[0.0, 3.0]), 12.0);
        assert_eq!(p.travel_time(1, 1).unwrap(), 0.0);
    }

    #[test]
    fn one_mile_at_twelve_mph_is_five_minutes() {
        let p = TravelTimeProvider::synthetic(&line_zones(&[0.0, 1.0]), 12.0);
        assert_eq!(p.travel_time(0, 1).unwrap(), 5.0);
    }

    #[test]
    fn synthetic_rounds_up() {
        let p = TravelTimeProvider::synthetic(&line_zones(&[0.0, 1.01]), 12.0);
        assert_eq!(p.travel_time(0, 1).unwrap(), 6.0);
    }

    #[test]
    fn matrix_passthrough_and_missing() {
        let p = TravelTimeProvider::Matrix {
            n: 2,
            minutes: vec![Some(0.0), Some(7.25), None, Some(0.0)],
        };
        assert_eq!(p.travel_time(0, 1).unwrap(), 7.25);
        assert!(matches!(
            p.travel_time(1, 0),
            Err(Error::MissingTravelTime { from: 1, to: 0 })
        ));
        assert!(matches!(p.travel_time(0, 2), Err(Error::UnknownZone { .. })));
    }

    #[test]
    fn neighbours_sorted_by_time() {
        let p = TravelTimeProvider::synthetic(&line_zones(&[0.0, 2.0, 1.0, 9.0]), 12.0);
        let table = TravelTable::build(&p).unwrap();
        assert_eq!(
            table.neighbours_within(0, 20),
            vec![(0, 0), (5, 2), (10, 1)]
        );
    }
}
