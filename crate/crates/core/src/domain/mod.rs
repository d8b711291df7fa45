//! Core entities shared by every other module.

mod io;
mod travel;
mod world;

use std::collections::VecDeque;

use serde::{Deserialize, Serialize};

pub use io::{
    load_ports, load_travel_matrix, load_trips, load_zones, write_ports_csv, write_trips_csv,
    write_zones_csv,
};
pub use travel::{TravelTable, TravelTimeProvider};
pub use world::{demand_multiplier, generate_synthetic_world, PortSite, SyntheticWorldParams, World};

pub type ZoneId = usize;
pub type PortId = usize;
pub type SevId = usize;
pub type TripId = usize;

/// A demand/supply cell with a planar centroid in miles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub id: ZoneId,
    pub x_miles: f64,
    pub y_miles: f64,
}

impl Zone {
    pub fn distance_to(&self, other: &Zone) -> f64 {
        (self.x_miles - other.x_miles).hypot(self.y_miles - other.y_miles)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TripStatus {
    Open,
    Assigned,
    Fulfilled,
    Expired,
}

/// One passenger order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripRequest {
    pub id: TripId,
    pub request_tick: u64,
    pub origin: ZoneId,
    pub destination: ZoneId,
    pub distance_miles: f64,
    pub status: TripStatus,
}

impl TripRequest {
    /// Moves the request along `open -> assigned -> fulfilled` or
    /// `open -> expired`. Any other transition is a logic error.
    pub fn transition(&mut self, next: TripStatus) {
        use TripStatus::*;
        let ok = matches!(
            (self.status, next),
            (Open, Assigned) | (Assigned, Fulfilled) | (Open, Expired)
        );
        assert!(ok, "illegal trip transition {:?} -> {:?}", self.status, next);
        self.status = next;
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SevStatus {
    Idle,
    Cruising,
    Dispatching,
    Occupied,
    ToCharger,
    Queued,
    Charging,
    /// Ran out of charge; parked out of service until recovered.
    Stranded,
}

impl SevStatus {
    pub const ALL: [SevStatus; 8] = [
        SevStatus::Idle,
        SevStatus::Cruising,
        SevStatus::Dispatching,
        SevStatus::Occupied,
        SevStatus::ToCharger,
        SevStatus::Queued,
        SevStatus::Charging,
        SevStatus::Stranded,
    ];

    /// Idle and cruising vehicles can take a new order.
    pub fn is_available(self) -> bool {
        matches!(self, SevStatus::Idle | SevStatus::Cruising)
    }
}

/// A movement between two zone centroids.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Leg {
    pub from: ZoneId,
    pub to: ZoneId,
    pub depart_tick: u64,
    pub arrive_tick: u64,
    pub miles: f64,
}

impl Leg {
    /// Zone used as the vehicle's real-time position: the origin for the
    /// first half of the leg, the destination afterwards.
    pub fn position_at(&self, tick: u64) -> ZoneId {
        let elapsed = tick.saturating_sub(self.depart_tick);
        let total = self.arrive_tick - self.depart_tick;
        if 2 * elapsed < total {
            self.from
        } else {
            self.to
        }
    }
}

/// Shared electric vehicle.
#[derive(Debug, Clone, PartialEq)]
pub struct SevAgent {
    pub id: SevId,
    pub soc: f64,
    pub zone: ZoneId,
    pub status: SevStatus,
    pub assigned_request: Option<TripId>,
    pub assigned_port: Option<PortId>,
    /// Fares collected so far, in cents.
    pub revenue_cents: u64,
    pub busy_until_tick: u64,
    pub leg: Option<Leg>,
    pub enqueue_tick: Option<u64>,
    pub last_reposition_tick: Option<u64>,
}

impl SevAgent {
    pub fn new(id: SevId, zone: ZoneId, soc: f64) -> Self {
        Self {
            id,
            soc: soc.clamp(0.0, 1.0),
            zone,
            status: SevStatus::Idle,
            assigned_request: None,
            assigned_port: None,
            revenue_cents: 0,
            busy_until_tick: 0,
            leg: None,
            enqueue_tick: None,
            last_reposition_tick: None,
        }
    }

    pub fn revenue_usd(&self) -> f64 {
        self.revenue_cents as f64 / 100.0
    }

    /// Zone from which the vehicle would be dispatched right now.
    pub fn position(&self, tick: u64) -> ZoneId {
        match (self.status, &self.leg) {
            (SevStatus::Cruising, Some(leg)) => leg.position_at(tick),
            _ => self.zone,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum EpidemicState {
    S,
    I,
    R,
}

impl EpidemicState {
    pub fn label(self) -> &'static str {
        match self {
            EpidemicState::S => "S",
            EpidemicState::I => "I",
            EpidemicState::R => "R",
        }
    }
}

/// One DC fast-charging port with its FIFO queue and epidemic state.
#[derive(Debug, Clone, PartialEq)]
pub struct EvsePort {
    pub id: PortId,
    pub zone: ZoneId,
    pub epidemic: EpidemicState,
    pub queue: VecDeque<SevId>,
    pub serving: Option<SevId>,
    pub t_infected: Option<u64>,
    pub t_removed: Option<u64>,
    pub repair_visits: u64,
    /// Sessions completed before this tick are no longer part of the port's
    /// detection batch (set when the port returns from repair).
    pub history_reset_tick: u64,
}

impl EvsePort {
    pub fn new(id: PortId, zone: ZoneId) -> Self {
        Self {
            id,
            zone,
            epidemic: EpidemicState::S,
            queue: VecDeque::new(),
            serving: None,
            t_infected: None,
            t_removed: None,
            repair_visits: 0,
            history_reset_tick: 0,
        }
    }

    pub fn in_service(&self) -> bool {
        self.epidemic != EpidemicState::R
    }

    /// Vehicles physically at the port (queued plus the one being served).
    pub fn queue_length(&self) -> usize {
        self.queue.len() + usize::from(self.serving.is_some())
    }
}
