//! Agent-based simulator of an electric shared-mobility system (SEV fleet plus
//! DC fast-charging network) under a delayed-charging attack.
//!
//! The crate is organised bottom-up:
//!
//! * [`domain`] – zones, trips, vehicles, ports, travel times and world I/O.
//! * [`battery`] – CC-CV charging physics and the SoC-spoofing mechanism.
//! * [`attack`] – SIRS epidemic over charging ports and delay injection.
//! * [`anomaly`] – the five charging-log anomaly detectors and confusion metrics.
//! * [`mobility`] – request matching, charger choice, repositioning and fares.
//! * [`engine`] – the minute-tick loop that binds everything together.

pub mod anomaly;
pub mod attack;
pub mod battery;
pub mod config;
pub mod domain;
pub mod engine;
mod error;
pub mod mobility;
pub mod rng;

pub use config::{ConfigError, Scale, ScenarioConfig};
pub use domain::{
    generate_synthetic_world, load_trips, EpidemicState, EvsePort, SevAgent, SevStatus,
    TravelTimeProvider, TripRequest, TripStatus, World, Zone,
};
pub use engine::{pair_baseline, run, LossReport, RunOutput, RunSummary};
pub use error::{Error, Result};

/// Minutes in one simulated day.
pub const MINUTES_PER_DAY: u64 = 1440;
