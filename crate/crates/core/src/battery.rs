//! CC-CV charging physics, the SoC-spoofing mechanism, and drive depletion.
//!
//! Currents are normalised to the constant-current plateau (`i_max = 1`).
//! Below the tipping SoC the battery charges at the constant rate; above it
//! the current decays linearly to zero at full charge.

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Integration step used whenever a charge enters the CV region.
const CV_STEP_MIN: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryModel {
    pub capacity_kwh: f64,
    pub range_miles: f64,
    /// Range added per minute on the CC plateau.
    pub cc_rate_miles_per_min: f64,
    pub soc_tip: f64,
    pub i_max: f64,
}

impl Default for BatteryModel {
    fn default() -> Self {
        Self {
            capacity_kwh: 50.0,
            range_miles: 220.0,
            cc_rate_miles_per_min: 5.13,
            soc_tip: 0.80,
            i_max: 1.0,
        }
    }
}

impl BatteryModel {
    /// SoC gained per minute on the CC plateau (5.13 / 220 ~ 0.0233).
    pub fn cc_soc_rate_per_min(&self) -> f64 {
        self.cc_rate_miles_per_min / self.range_miles
    }

    /// Current requested by the BMS at a given (reported) SoC.
    pub fn cc_cv_current(&self, soc: f64) -> f64 {
        let soc = soc.clamp(0.0, 1.0);
        if soc < self.soc_tip {
            self.i_max
        } else {
            (self.i_max * (1.0 - soc) / (1.0 - self.soc_tip)).max(0.0)
        }
    }

    /// Current the BMS accepts when the charger reports `true_soc + offset`.
    pub fn spoofed_current(&self, true_soc: f64, spoof_offset: f64) -> f64 {
        debug_assert!(spoof_offset >= 0.0);
        self.cc_cv_current((true_soc + spoof_offset.max(0.0)).min(1.0))
    }

    /// Minutes (fractional) needed to go from `initial` to `target` while the
    /// charger reports SoC shifted by `spoof_offset`. Integrated with
    /// 0.1-minute steps; `None` if the target is unreachable (zero current).
    pub fn time_to_target(&self, initial: f64, target: f64, spoof_offset: f64) -> Option<f64> {
        let rate = self.cc_soc_rate_per_min();
        let mut soc = initial;
        let mut t = 0.0;
        // 10 hours is far beyond any reachable target
        while soc < target - 1e-12 {
            let i = self.spoofed_current(soc, spoof_offset) / self.i_max;
            if i <= 0.0 || t > 600.0 {
                return None;
            }
            soc = (soc + rate * i * CV_STEP_MIN).min(1.0);
            t += CV_STEP_MIN;
        }
        Some(t)
    }

    /// SoC sampled every 0.1 minute over `minutes` of charging.
    pub fn soc_trajectory(&self, initial: f64, spoof_offset: f64, minutes: f64) -> Vec<f64> {
        let rate = self.cc_soc_rate_per_min();
        let steps = (minutes / CV_STEP_MIN).round() as usize;
        let mut soc = initial.clamp(0.0, 1.0);
        let mut out = Vec::with_capacity(steps + 1);
        out.push(soc);
        for _ in 0..steps {
            let i = self.spoofed_current(soc, spoof_offset) / self.i_max;
            soc = (soc + rate * i * CV_STEP_MIN).min(1.0);
            out.push(soc);
        }
        out
    }

    /// Whole-minute charging duration from `initial_soc` to `target_soc`.
    pub fn charge_duration(&self, initial_soc: f64, target_soc: f64) -> Result<u32> {
        if target_soc < initial_soc {
            return Err(Error::TargetBelowInitial {
                initial: initial_soc,
                target: target_soc,
            });
        }
        if target_soc == initial_soc {
            return Ok(0);
        }
        let minutes = if target_soc <= self.soc_tip {
            (target_soc - initial_soc) * self.range_miles / self.cc_rate_miles_per_min
        } else {
            self.time_to_target(initial_soc, target_soc, 0.0)
                .unwrap_or(f64::INFINITY)
        };
        Ok((minutes - 1e-9).ceil().max(0.0).min(u32::MAX as f64) as u32)
    }

    pub fn deplete(&self, soc: f64, distance_miles: f64) -> Depletion {
        debug_assert!(distance_miles >= 0.0);
        let raw = soc - distance_miles.max(0.0) / self.range_miles;
        Depletion {
            soc: raw.max(0.0),
            stranded: raw < 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Depletion {
    pub soc: f64,
    /// The move needed more energy than the battery held.
    pub stranded: bool,
}

/// Distribution of the SoC a driver charges to.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChargeTarget {
    pub mean: f64,
    pub sd: f64,
    pub max: f64,
}

impl Default for ChargeTarget {
    fn default() -> Self {
        Self {
            mean: 0.78,
            sd: 0.02,
            max: 0.80,
        }
    }
}

impl ChargeTarget {
    /// Draws a target, bounded above by `max` and below by the current SoC.
    pub fn draw<R: Rng + ?Sized>(&self, current_soc: f64, rng: &mut R) -> f64 {
        let raw = if self.sd > 0.0 {
            Normal::new(self.mean, self.sd)
                .expect("finite normal parameters")
                .sample(rng)
        } else {
            self.mean
        };
        raw.min(self.max).max(current_soc).min(1.0)
    }
}
