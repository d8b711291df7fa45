//! SIRS dynamics over charging ports and the charging-delay injection.
//!
//! Ports move S -> I with a per-epoch Bernoulli draw, I -> R when a detector
//! flag is confirmed by alarm validation, and R -> S once the repair outage
//! has elapsed. Infectious ports add a Gaussian delay to every session they
//! serve.

use std::collections::BTreeSet;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::domain::{EpidemicState, EvsePort, PortId};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitialState {
    AllInfectious,
    AllSusceptible,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttackConfig {
    /// When false the epidemic never starts (attack-free baseline).
    pub enabled: bool,
    pub beta: f64,
    pub delay_mean_min: f64,
    /// Defaults to a tenth of the mean when unset.
    pub delay_sd_min: Option<f64>,
    pub infection_epoch_min: u64,
    pub repair_duration_min: u64,
    pub initial_state: InitialState,
}

impl Default for AttackConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            beta: 0.1,
            delay_mean_min: 10.0,
            delay_sd_min: None,
            infection_epoch_min: 30,
            repair_duration_min: 180,
            initial_state: InitialState::AllInfectious,
        }
    }
}

impl AttackConfig {
    pub fn delay_sd(&self) -> f64 {
        self.delay_sd_min.unwrap_or(0.1 * self.delay_mean_min).max(0.0)
    }
}

/// Puts every port into its launch state.
pub fn launch(ports: &mut [EvsePort], tick: u64, cfg: &AttackConfig) {
    if cfg.initial_state == InitialState::AllInfectious {
        for p in ports.iter_mut().filter(|p| p.epidemic == EpidemicState::S) {
            p.epidemic = EpidemicState::I;
            p.t_infected = Some(tick);
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Transition {
    pub port: PortId,
    pub from: EpidemicState,
    pub to: EpidemicState,
}

/// What happened during one epidemic step.
#[derive(Debug, Clone, Default, PartialEq, Serialize)]
pub struct EpochLog {
    pub tick: u64,
    pub transitions: Vec<Transition>,
    /// Technician visits dispatched this epoch (one per flagged port).
    pub visits: u64,
    /// Flagged ports that were infectious and got removed.
    pub confirmed: Vec<PortId>,
    /// Flagged ports that were not infectious.
    pub false_alarms: Vec<PortId>,
}

impl EpochLog {
    pub fn removed(&self) -> impl Iterator<Item = PortId> + '_ {
        self.transitions
            .iter()
            .filter(|t| t.to == EpidemicState::R)
            .map(|t| t.port)
    }
}

/// One epidemic step: infections, repair completions, then alarm validation
/// of this epoch's detector flags against the states the ports had when the
/// detector ran.
pub fn step_epidemic<R: Rng + ?Sized>(
    ports: &mut [EvsePort],
    tick: u64,
    cfg: &AttackConfig,
    detections: &BTreeSet<PortId>,
    rng: &mut R,
) -> Result<EpochLog> {
    if let Some(&bad) = detections.iter().find(|&&id| id >= ports.len()) {
        return Err(Error::UnknownPort(bad));
    }
    let before: Vec<EpidemicState> = ports.iter().map(|p| p.epidemic).collect();
    let mut log = EpochLog {
        tick,
        ..EpochLog::default()
    };

    for port in ports.iter_mut() {
        match port.epidemic {
            EpidemicState::S => {
                if rng.random_bool(cfg.beta.clamp(0.0, 1.0)) {
                    port.epidemic = EpidemicState::I;
                    port.t_infected = Some(tick);
                    log.transitions.push(Transition {
                        port: port.id,
                        from: EpidemicState::S,
                        to: EpidemicState::I,
                    });
                }
            }
            EpidemicState::R => {
                let removed_at = port.t_removed.expect("removed port has a removal time");
                if tick - removed_at >= cfg.repair_duration_min {
                    port.epidemic = EpidemicState::S;
                    port.t_removed = None;
                    port.history_reset_tick = tick;
                    log.transitions.push(Transition {
                        port: port.id,
                        from: EpidemicState::R,
                        to: EpidemicState::S,
                    });
                }
            }
            EpidemicState::I => {}
        }
    }

    for &id in detections {
        let port = &mut ports[id];
        port.repair_visits += 1;
        log.visits += 1;
        if before[id] == EpidemicState::I {
            port.epidemic = EpidemicState::R;
            port.t_removed = Some(tick);
            port.serving = None;
            log.confirmed.push(id);
            log.transitions.push(Transition {
                port: id,
                from: EpidemicState::I,
                to: EpidemicState::R,
            });
        } else {
            log.false_alarms.push(id);
        }
    }
    Ok(log)
}

/// Session duration after the attack: infectious ports add
/// `max(0, N(mu, sigma))` minutes, every other port is the identity.
pub fn inject_delay<R: Rng + ?Sized>(
    true_duration: u32,
    port_state: EpidemicState,
    cfg: &AttackConfig,
    rng: &mut R,
) -> u32 {
    if port_state != EpidemicState::I {
        return true_duration;
    }
    let sd = cfg.delay_sd();
    let delta = if sd > 0.0 {
        Normal::new(cfg.delay_mean_min, sd)
            .expect("finite delay parameters")
            .sample(rng)
    } else {
        cfg.delay_mean_min
    };
    true_duration + delta.max(0.0).round() as u32
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochCounts {
    pub tick: u64,
    pub n_s: usize,
    pub n_i: usize,
    pub n_r: usize,
    pub repair_visits: u64,
    pub repair_cost_cents: u64,
}

/// Epidemic trajectory and repair bill of a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpidemicStats {
    pub cost_per_visit_cents: u64,
    pub epochs: Vec<EpochCounts>,
    pub total_visits: u64,
    pub confirmed_detections: u64,
    pub infectious_port_epochs: u64,
}

impl EpidemicStats {
    pub fn new(cost_per_visit_cents: u64) -> Self {
        Self {
            cost_per_visit_cents,
            epochs: Vec::new(),
            total_visits: 0,
            confirmed_detections: 0,
            infectious_port_epochs: 0,
        }
    }

    pub fn repair_accounting(&mut self, visits: u64) {
        self.total_visits += visits;
    }

    pub fn total_cost_cents(&self) -> u64 {
        self.total_visits * self.cost_per_visit_cents
    }

    pub fn total_cost_usd(&self) -> f64 {
        self.total_cost_cents() as f64 / 100.0
    }

    /// Records one finished epoch: counts, visits and confirmed detections.
    pub fn record_epoch(&mut self, ports: &[EvsePort], log: &EpochLog, infectious_before: usize) {
        self.repair_accounting(log.visits);
        self.confirmed_detections += log.confirmed.len() as u64;
        self.infectious_port_epochs += infectious_before as u64;
        let count = |s| ports.iter().filter(|p| p.epidemic == s).count();
        self.epochs.push(EpochCounts {
            tick: log.tick,
            n_s: count(EpidemicState::S),
            n_i: count(EpidemicState::I),
            n_r: count(EpidemicState::R),
            repair_visits: log.visits,
            repair_cost_cents: log.visits * self.cost_per_visit_cents,
        });
    }

    /// Realised recovery rate: confirmed detections per infectious port-epoch.
    pub fn recovery_rate(&self) -> f64 {
        if self.infectious_port_epochs == 0 {
            0.0
        } else {
            self.confirmed_detections as f64 / self.infectious_port_epochs as f64
        }
    }
}
