//! Per-tick, per-session and per-trip output rows and their CSV writers.

use std::path::Path;

use serde::Serialize;

use crate::attack::EpochCounts;
use crate::domain::{PortId, SevId, TripId};
use crate::{Error, Result};

/// One completed or in-progress charging session.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SessionRecord {
    pub port_id: PortId,
    pub sev_id: SevId,
    pub enqueue_tick: u64,
    pub start_tick: u64,
    pub true_duration: u32,
    pub actual_duration: u32,
    pub initial_soc: f64,
    /// Epidemic state of the port when the session started.
    pub port_state: &'static str,
}

impl SessionRecord {
    pub fn queue_time(&self) -> u64 {
        self.start_tick - self.enqueue_tick
    }

    pub fn infected(&self) -> bool {
        self.port_state == "I"
    }
}

/// One fulfilled trip with the fare it paid.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TripRecord {
    pub trip_id: TripId,
    pub sev_id: SevId,
    pub request_tick: u64,
    pub pickup_tick: u64,
    pub dropoff_tick: u64,
    pub distance_miles: f64,
    pub in_vehicle_min: u32,
    pub fare_cents: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionRecord {
    pub epoch_tick: u64,
    pub detector: &'static str,
    pub port_id: PortId,
    pub flag: u8,
    pub truth: u8,
    pub batch_size: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpidemicRecord {
    pub epoch_tick: u64,
    pub n_s: usize,
    pub n_i: usize,
    pub n_r: usize,
    pub repair_visits: u64,
    pub repair_cost_usd: f64,
}

impl From<&EpochCounts> for EpidemicRecord {
    fn from(e: &EpochCounts) -> Self {
        Self {
            epoch_tick: e.tick,
            n_s: e.n_s,
            n_i: e.n_i,
            n_r: e.n_r,
            repair_visits: e.repair_visits,
            repair_cost_usd: e.repair_cost_cents as f64 / 100.0,
        }
    }
}

/// System state at the end of one tick.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsFrame {
    pub tick: u64,
    pub arrived_total: u64,
    pub open_requests: usize,
    /// Requests matched to a SEV and not yet dropped off.
    pub assigned_requests: usize,
    pub fulfilled_total: u64,
    pub expired_total: u64,
    /// Fulfilled over fulfilled plus expired in the trailing hour; 1 when
    /// neither happened.
    pub fulfillment_rate: f64,
    pub sev_occupancy: f64,
    pub evse_occupancy: f64,
    /// Mean over sessions started this tick; absent when none started.
    pub mean_queue_time: Option<f64>,
    pub mean_charge_duration: Option<f64>,
    pub revenue_usd: f64,
    pub idle: usize,
    pub cruising: usize,
    pub dispatching: usize,
    pub occupied: usize,
    pub to_charger: usize,
    pub queued: usize,
    pub charging: usize,
    pub stranded: usize,
    pub n_s: usize,
    pub n_i: usize,
    pub n_r: usize,
}

pub fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let io_err = |e: std::io::Error| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(e.into()))?;
    for r in rows {
        w.serialize(r).map_err(|e| io_err(e.into()))?;
    }
    w.flush().map_err(io_err)
}

/// CSV text of `rows`, header included.
pub fn to_csv_string<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("in-memory csv write");
    }
    String::from_utf8(w.into_inner().expect("in-memory csv flush")).expect("csv output is utf-8")
}
