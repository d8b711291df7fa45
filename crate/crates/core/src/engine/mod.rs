//! Minute-tick simulation loop.
//!
//! Each tick runs, in order: request expiry and arrival, greedy matching,
//! leg completions (pick-ups, drop-offs, arrivals at chargers, recoveries),
//! charging decisions, port service, repositioning and, on infection-epoch
//! boundaries after launch, anomaly detection followed by the epidemic step.

mod records;
mod summary;

use std::collections::{BTreeSet, VecDeque};
use std::path::Path;

use rand::Rng;

use crate::anomaly::{self, ChargingFeature, ConfusionTally, Detector};
use crate::attack::{self, AttackConfig, EpidemicStats};
use crate::config::ScenarioConfig;
use crate::domain::{
    self, EpidemicState, EvsePort, Leg, PortId, SevAgent, SevId, SevStatus, SyntheticWorldParams,
    TravelTable, TravelTimeProvider, TripId, TripRequest, TripStatus, World, ZoneId,
};
use crate::mobility::{self, AvailableSev, OpenRequest, PortCandidate, SupplyDemandTracker};
use crate::rng::{stream, SimRng, Stream};
use crate::{Error, Result, MINUTES_PER_DAY};

pub use records::{
    to_csv_string, write_csv, DetectionRecord, EpidemicRecord, MetricsFrame, SessionRecord, TripRecord,
};
pub use summary::{loss_between, pair_baseline, DetectionSummary, LossReport, RunSummary};

/// Length of the evaluation window at the end of a run.
pub const FINAL_WINDOW_DAYS: u64 = 7;
/// Trailing window of the fulfillment-rate metric.
pub const FULFILLMENT_WINDOW_MIN: u64 = 60;

/// Everything a run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub summary: RunSummary,
    pub metrics: Vec<MetricsFrame>,
    pub sessions: Vec<SessionRecord>,
    pub trips: Vec<TripRecord>,
    pub epidemic: Vec<EpidemicRecord>,
    pub detections: Vec<DetectionRecord>,
    pub detector_summary: Option<serde_json::Value>,
}

impl RunOutput {
    /// Writes the CSV outputs plus `summary.json` (and `detector.json` when a
    /// detector ran) into `dir`.
    pub fn write_to(&self, dir: &Path) -> Result<()> {
        let io = |path: &Path, e: std::io::Error| Error::Io {
            path: path.to_path_buf(),
            source: e,
        };
        std::fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
        write_csv(&dir.join("metrics.csv"), &self.metrics)?;
        write_csv(&dir.join("sessions.csv"), &self.sessions)?;
        write_csv(&dir.join("trips.csv"), &self.trips)?;
        write_csv(&dir.join("epidemic.csv"), &self.epidemic)?;
        write_csv(&dir.join("detections.csv"), &self.detections)?;
        let summary = dir.join("summary.json");
        let text = serde_json::to_string_pretty(&self.summary).expect("summary serialises");
        std::fs::write(&summary, text).map_err(|e| io(&summary, e))?;
        if let Some(d) = &self.detector_summary {
            let path = dir.join("detector.json");
            let text = serde_json::to_string_pretty(d).expect("detector summary serialises");
            std::fs::write(&path, text).map_err(|e| io(&path, e))?;
        }
        Ok(())
    }
}

/// Builds the world for one seed: the configured CSV files if any, else a
/// synthetic world drawn from the seed's demand stream.
pub fn build_world(cfg: &ScenarioConfig, seed: u64) -> Result<World> {
    let mut rng = stream(seed, Stream::Demand);
    let w = &cfg.world;
    let world = match (&w.zones_csv, &w.ports_csv, &w.trips_csv) {
        (Some(zones), Some(ports), Some(trips)) => {
            let zones = domain::load_zones(zones)?;
            let ports = domain::load_ports(ports, zones.len())?;
            let trips = domain::load_trips(trips, zones.len(), w.trip_sample_fraction, &mut rng)?;
            let travel = match &w.travel_matrix_csv {
                Some(m) => domain::load_travel_matrix(m, zones.len())?,
                None => TravelTimeProvider::synthetic(&zones, w.speed_mph),
            };
            World {
                zones,
                ports,
                trips,
                travel,
            }
        }
        (None, None, None) => domain::generate_synthetic_world(
            &SyntheticWorldParams {
                n_zones: w.n_zones,
                n_ports: w.n_ports,
                demand_rate_per_min: w.demand_rate_per_min,
                horizon_min: cfg.horizon_min(),
                zone_spacing_miles: w.zone_spacing_miles,
                speed_mph: w.speed_mph,
            },
            &mut rng,
        )?,
        _ => {
            return Err(Error::InvalidWorld(
                "zones, ports and trips files must be given together".into(),
            ))
        }
    };
    world.validate()?;
    Ok(world)
}

/// Runs one scenario on `world` with the mobility, attack and detection
/// streams of `seed`.
pub fn run(cfg: &ScenarioConfig, world: &World, seed: u64) -> Result<RunOutput> {
    cfg.validate()?;
    world.validate()?;
    let mut sim = Sim::new(cfg, world, seed)?;
    for tick in 0..cfg.horizon_min() {
        sim.step(tick)?;
    }
    Ok(sim.finish(world, seed))
}

/// A completed session remembered by its port.
#[derive(Debug, Clone, Copy)]
struct PortSession {
    end_tick: u64,
    feature: ChargingFeature,
}

struct Sim<'a> {
    cfg: &'a ScenarioConfig,
    attack_cfg: AttackConfig,
    detector_cfg: Option<anomaly::DetectorConfig>,
    table: TravelTable,
    launch_tick: u64,

    trips: Vec<TripRequest>,
    next_arrival: usize,
    open: Vec<TripId>,

    sevs: Vec<SevAgent>,
    queue_choice_tick: Vec<u64>,
    charge_target: Vec<f64>,
    pickup_tick: Vec<u64>,
    pending_strand: Vec<bool>,
    /// Index into `sessions` of each SEV's current or last session.
    current_session: Vec<usize>,

    ports: Vec<EvsePort>,
    port_history: Vec<VecDeque<PortSession>>,
    history_span: u64,
    tracker: SupplyDemandTracker,

    mob: SimRng,
    atk: SimRng,
    det_rng: SimRng,
    detector: Option<Detector>,
    training: Vec<ChargingFeature>,
    stats: EpidemicStats,
    tally: ConfusionTally,
    detection_epochs: u64,

    sessions: Vec<SessionRecord>,
    trip_log: Vec<TripRecord>,
    detections: Vec<DetectionRecord>,
    metrics: Vec<MetricsFrame>,

    revenue_cents: u64,
    daily_revenue_cents: Vec<u64>,
    arrived_total: u64,
    assigned_active: usize,
    fulfilled_total: u64,
    expired_total: u64,
    recent_outcomes: VecDeque<(u64, bool)>,
    stranded_events: u64,
    started_this_tick: Vec<(u64, u32)>,
}

impl<'a> Sim<'a> {
    fn new(cfg: &'a ScenarioConfig, world: &World, seed: u64) -> Result<Self> {
        let table = TravelTable::build(&world.travel)?;
        let mut mob = stream(seed, Stream::Mobility);
        let n_zones = world.zones.len();
        let sevs: Vec<SevAgent> = (0..cfg.fleet_size)
            .map(|id| {
                let zone = mob.random_range(0..n_zones);
                let soc = if cfg.initial_soc_max > cfg.initial_soc_min {
                    mob.random_range(cfg.initial_soc_min..cfg.initial_soc_max)
                } else {
                    cfg.initial_soc_min
                };
                SevAgent::new(id, zone, soc)
            })
            .collect();
        let ports: Vec<EvsePort> = world
            .ports
            .iter()
            .map(|p| EvsePort::new(p.port_id, p.zone_id))
            .collect();
        let mut attack_cfg = cfg.attack.clone();
        if !attack_cfg.enabled {
            attack_cfg.beta = 0.0;
        }
        let detector_cfg = cfg.detector_config();
        let history_span = cfg
            .service_window_min
            .max(detector_cfg.as_ref().map_or(0, |d| d.window_min));
        let n = sevs.len();
        let mut trips = world.trips.clone();
        for t in &mut trips {
            t.status = TripStatus::Open;
        }
        Ok(Self {
            cfg,
            attack_cfg,
            detector_cfg,
            table,
            launch_tick: cfg.warmup_min(),
            trips,
            next_arrival: 0,
            open: Vec::new(),
            sevs,
            queue_choice_tick: vec![0; n],
            charge_target: vec![0.0; n],
            pickup_tick: vec![0; n],
            pending_strand: vec![false; n],
            current_session: vec![0; n],
            port_history: vec![VecDeque::new(); ports.len()],
            ports,
            history_span,
            tracker: SupplyDemandTracker::new(n_zones, cfg.supply_demand_window_min),
            mob,
            atk: stream(seed, Stream::Attack),
            det_rng: stream(seed, Stream::Detection),
            detector: None,
            training: Vec::new(),
            stats: EpidemicStats::new(cfg.repair_cost_cents()),
            tally: ConfusionTally::default(),
            detection_epochs: 0,
            sessions: Vec::new(),
            trip_log: Vec::new(),
            detections: Vec::new(),
            metrics: Vec::new(),
            revenue_cents: 0,
            daily_revenue_cents: vec![0; cfg.horizon_days as usize],
            arrived_total: 0,
            assigned_active: 0,
            fulfilled_total: 0,
            expired_total: 0,
            recent_outcomes: VecDeque::new(),
            stranded_events: 0,
            started_this_tick: Vec::new(),
        })
    }

    fn step(&mut self, tick: u64) -> Result<()> {
        self.tracker.begin_minute(tick);
        self.started_this_tick.clear();
        self.requests(tick);
        self.match_requests(tick);
        self.advance_legs(tick)?;
        self.charging_decisions(tick)?;
        self.serve_ports(tick)?;
        self.reposition(tick);
        if tick == self.launch_tick {
            self.launch(tick)?;
        } else if tick > self.launch_tick && (tick - self.launch_tick) % self.attack_cfg.infection_epoch_min == 0 {
            self.epoch(tick)?;
        }
        self.record_metrics(tick);
        Ok(())
    }

    // ---- requests and matching -------------------------------------------

    fn requests(&mut self, tick: u64) {
        let max_wait = self.cfg.max_wait_min;
        let trips = &mut self.trips;
        let mut expired = 0;
        self.open.retain(|&id| {
            let t = &mut trips[id];
            if tick - t.request_tick > max_wait {
                t.transition(TripStatus::Expired);
                expired += 1;
                false
            } else {
                true
            }
        });
        for _ in 0..expired {
            self.recent_outcomes.push_back((tick, false));
        }
        self.expired_total += expired;
        while self.next_arrival < self.trips.len() && self.trips[self.next_arrival].request_tick <= tick {
            self.open.push(self.next_arrival);
            self.next_arrival += 1;
            self.arrived_total += 1;
        }
    }

    fn match_requests(&mut self, tick: u64) {
        if self.open.is_empty() {
            return;
        }
        let requests: Vec<OpenRequest> = self
            .open
            .iter()
            .map(|&id| OpenRequest {
                id,
                origin: self.trips[id].origin,
            })
            .collect();
        let available: Vec<AvailableSev> = self
            .sevs
            .iter()
            .filter(|s| s.status.is_available())
            .map(|s| AvailableSev {
                id: s.id,
                zone: s.position(tick),
            })
            .collect();
        if available.is_empty() {
            return;
        }
        let assignments = mobility::greedy_match(&requests, &available, &self.table, self.cfg.dispatch_radius_min);
        for a in &assignments {
            let origin = self.trips[a.request].origin;
            self.trips[a.request].transition(TripStatus::Assigned);
            self.assigned_active += 1;
            let speed = self.cfg.world.speed_mph;
            let sev = &mut self.sevs[a.sev];
            if sev.status == SevStatus::Cruising {
                // abandon the reposition leg at the current position
                let leg = sev.leg.take().expect("cruising SEV has a leg");
                let total = (leg.arrive_tick - leg.depart_tick).max(1) as f64;
                let done = (tick - leg.depart_tick) as f64 / total;
                let d = self.cfg.battery.deplete(sev.soc, leg.miles * done);
                sev.soc = d.soc;
                self.pending_strand[a.sev] |= d.stranded;
                sev.zone = leg.position_at(tick);
            }
            sev.status = SevStatus::Dispatching;
            sev.assigned_request = Some(a.request);
            sev.leg = Some(Leg {
                from: sev.zone,
                to: origin,
                depart_tick: tick,
                arrive_tick: tick + a.eta as u64,
                miles: a.eta as f64 * speed / 60.0,
            });
        }
        let matched: BTreeSet<TripId> = assignments.iter().map(|a| a.request).collect();
        self.open.retain(|id| !matched.contains(id));
    }

    // ---- movement ------------------------------------------------------------

    /// Finishes the SEV's current leg: position, energy and strand flag.
    fn arrive(&mut self, id: SevId) -> Leg {
        let sev = &mut self.sevs[id];
        let leg = sev.leg.take().expect("moving SEV has a leg");
        sev.zone = leg.to;
        let d = self.cfg.battery.deplete(sev.soc, leg.miles);
        sev.soc = d.soc;
        self.pending_strand[id] |= d.stranded;
        leg
    }

    fn start_leg(&mut self, id: SevId, to: ZoneId, tick: u64, minutes: u32, miles: f64, status: SevStatus) {
        let sev = &mut self.sevs[id];
        sev.status = status;
        sev.leg = Some(Leg {
            from: sev.zone,
            to,
            depart_tick: tick,
            arrive_tick: tick + minutes as u64,
            miles,
        });
    }

    fn deadhead_miles(&self, minutes: u32) -> f64 {
        minutes as f64 * self.cfg.world.speed_mph / 60.0
    }

    fn strand(&mut self, id: SevId, tick: u64) {
        self.pending_strand[id] = false;
        self.stranded_events += 1;
        let sev = &mut self.sevs[id];
        sev.status = SevStatus::Stranded;
        sev.soc = 0.0;
        sev.busy_until_tick = tick + self.cfg.stranded_outage_min;
    }

    fn becomes_idle(&mut self, id: SevId, tick: u64) {
        if self.pending_strand[id] {
            self.strand(id, tick);
        } else {
            self.sevs[id].status = SevStatus::Idle;
        }
    }

    fn advance_legs(&mut self, tick: u64) -> Result<()> {
        for id in 0..self.sevs.len() {
            let sev = &self.sevs[id];
            let due = sev.leg.is_some_and(|l| l.arrive_tick <= tick);
            match sev.status {
                SevStatus::Dispatching if due => {
                    let leg = self.arrive(id);
                    let trip_id = self.sevs[id].assigned_request.expect("dispatching SEV has a request");
                    let trip = &self.trips[trip_id];
                    let (dest, miles) = (trip.destination, trip.distance_miles);
                    self.tracker.record_pickup(leg.to);
                    self.pickup_tick[id] = tick;
                    let minutes = self.table.get(leg.to, dest).max(1);
                    self.start_leg(id, dest, tick, minutes, miles, SevStatus::Occupied);
                }
                SevStatus::Occupied if due => {
                    let leg = self.arrive(id);
                    let trip_id = self.sevs[id].assigned_request.take().expect("occupied SEV has a request");
                    let minutes = (leg.arrive_tick - leg.depart_tick) as u32;
                    let trip = &mut self.trips[trip_id];
                    trip.transition(TripStatus::Fulfilled);
                    let fare = self.cfg.fare.fare_cents(trip.distance_miles, minutes as f64);
                    self.trip_log.push(TripRecord {
                        trip_id,
                        sev_id: id,
                        request_tick: trip.request_tick,
                        pickup_tick: self.pickup_tick[id],
                        dropoff_tick: tick,
                        distance_miles: trip.distance_miles,
                        in_vehicle_min: minutes,
                        fare_cents: fare,
                    });
                    self.sevs[id].revenue_cents += fare;
                    self.revenue_cents += fare;
                    let day = (tick / MINUTES_PER_DAY) as usize;
                    self.daily_revenue_cents[day] += fare;
                    self.assigned_active -= 1;
                    self.fulfilled_total += 1;
                    self.recent_outcomes.push_back((tick, true));
                    self.becomes_idle(id, tick);
                }
                SevStatus::Cruising if due => {
                    self.arrive(id);
                    self.becomes_idle(id, tick);
                }
                SevStatus::ToCharger if due => {
                    self.arrive(id);
                    if self.pending_strand[id] {
                        // ran dry on the way but made it to the port
                        self.pending_strand[id] = false;
                        self.stranded_events += 1;
                    }
                    let port = self.sevs[id].assigned_port.expect("SEV heading to a port");
                    if self.ports[port].in_service() {
                        self.enqueue(id, port, tick);
                    } else {
                        self.send_to_charger(id, tick)?;
                    }
                }
                SevStatus::Stranded if sev.busy_until_tick <= tick => self.recover(id, tick),
                _ => {}
            }
        }
        Ok(())
    }

    /// Tows a stranded SEV to the nearest port in service.
    fn recover(&mut self, id: SevId, tick: u64) {
        let zone = self.sevs[id].zone;
        let best = self
            .ports
            .iter()
            .filter(|p| p.in_service())
            .min_by_key(|p| (self.table.get(zone, p.zone), p.id))
            .map(|p| p.id);
        if let Some(port) = best {
            let sev = &mut self.sevs[id];
            sev.soc = sev.soc.max(self.cfg.stranded_recovery_soc);
            sev.zone = self.ports[port].zone;
            self.enqueue(id, port, tick);
        }
    }

    // ---- charging --------------------------------------------------------------

    fn mean_session_minutes(&self, port: PortId, tick: u64) -> f64 {
        let window = self.cfg.service_window_min;
        let (sum, n) = self.port_history[port]
            .iter()
            .filter(|s| s.end_tick + window > tick)
            .fold((0.0, 0usize), |(s, n), x| (s + x.feature.d, n + 1));
        if n == 0 {
            self.cfg.cold_start_session_min
        } else {
            sum / n as f64
        }
    }

    fn port_candidates(&self, tick: u64) -> Vec<PortCandidate> {
        self.ports
            .iter()
            .filter(|p| p.in_service())
            .map(|p| PortCandidate {
                id: p.id,
                zone: p.zone,
                expected_wait_min: p.queue_length() as f64 * self.mean_session_minutes(p.id, tick),
            })
            .collect()
    }

    fn enqueue(&mut self, id: SevId, port: PortId, tick: u64) {
        self.ports[port].queue.push_back(id);
        let sev = &mut self.sevs[id];
        sev.status = SevStatus::Queued;
        sev.assigned_port = Some(port);
        // a SEV that moves between queues keeps its first enqueue tick
        sev.enqueue_tick.get_or_insert(tick);
        sev.zone = self.ports[port].zone;
        sev.leg = None;
        self.queue_choice_tick[id] = tick;
    }

    /// Picks a port by the charger-choice model and heads there. With every
    /// port out of service the SEV idles and tries again next tick.
    fn send_to_charger(&mut self, id: SevId, tick: u64) -> Result<()> {
        let candidates = self.port_candidates(tick);
        let zone = self.sevs[id].zone;
        let port = match mobility::choose_evse(zone, &candidates, &self.table, self.mob.random()) {
            Ok(p) => p,
            Err(Error::NoEligiblePort) => {
                let sev = &mut self.sevs[id];
                sev.status = SevStatus::Idle;
                sev.assigned_port = None;
                return Ok(());
            }
            Err(e) => return Err(e),
        };
        let to = self.ports[port].zone;
        let minutes = self.table.get(zone, to);
        self.sevs[id].assigned_port = Some(port);
        if minutes == 0 {
            self.enqueue(id, port, tick);
        } else {
            let miles = self.deadhead_miles(minutes);
            self.start_leg(id, to, tick, minutes, miles, SevStatus::ToCharger);
        }
        Ok(())
    }

    fn charging_decisions(&mut self, tick: u64) -> Result<()> {
        for id in 0..self.sevs.len() {
            let s = &self.sevs[id];
            if s.status == SevStatus::Idle && s.soc <= self.cfg.charge_trigger_soc {
                self.send_to_charger(id, tick)?;
            }
        }
        // queue abandonment: long waits re-run the charger choice
        let mut waiting: Vec<(PortId, SevId)> = Vec::new();
        for p in self.ports.iter().filter(|p| p.in_service()) {
            for &id in &p.queue {
                if tick - self.queue_choice_tick[id] >= self.cfg.queue_abandon_min {
                    waiting.push((p.id, id));
                }
            }
        }
        for (port, id) in waiting {
            let candidates = self.port_candidates(tick);
            let zone = self.sevs[id].zone;
            let choice = mobility::choose_evse(zone, &candidates, &self.table, self.mob.random())?;
            if choice == port {
                self.queue_choice_tick[id] = tick;
            } else {
                self.ports[port].queue.retain(|&s| s != id);
                let to = self.ports[choice].zone;
                let minutes = self.table.get(zone, to);
                self.sevs[id].assigned_port = Some(choice);
                if minutes == 0 {
                    self.enqueue(id, choice, tick);
                } else {
                    let miles = self.deadhead_miles(minutes);
                    self.start_leg(id, to, tick, minutes, miles, SevStatus::ToCharger);
                }
            }
        }
        Ok(())
    }

    fn serve_ports(&mut self, tick: u64) -> Result<()> {
        for id in 0..self.sevs.len() {
            let s = &self.sevs[id];
            if s.status != SevStatus::Charging || s.busy_until_tick > tick {
                continue;
            }
            let port = s.assigned_port.expect("charging SEV has a port");
            let session = self.sessions[self.session_index(id)].clone();
            let sev = &mut self.sevs[id];
            sev.soc = self.charge_target[id];
            sev.status = SevStatus::Idle;
            sev.assigned_port = None;
            sev.enqueue_tick = None;
            if self.ports[port].serving == Some(id) {
                self.ports[port].serving = None;
            }
            let feature = ChargingFeature::new(
                session.actual_duration as f64,
                (session.start_tick % MINUTES_PER_DAY) as f64,
                session.initial_soc,
            );
            if tick < self.launch_tick {
                self.training.push(feature);
            }
            let hist = &mut self.port_history[port];
            hist.push_back(PortSession { end_tick: tick, feature });
            while hist.front().is_some_and(|s| s.end_tick + self.history_span < tick) {
                hist.pop_front();
            }
        }
        for p in 0..self.ports.len() {
            let port = &mut self.ports[p];
            if !port.in_service() || port.serving.is_some() {
                continue;
            }
            let Some(id) = port.queue.pop_front() else { continue };
            port.serving = Some(id);
            let state = port.epidemic;
            let initial = self.sevs[id].soc;
            let target = self.cfg.charge_target.draw(initial, &mut self.mob);
            let true_duration = self.cfg.battery.charge_duration(initial, target)?;
            let actual = attack::inject_delay(true_duration, state, &self.attack_cfg, &mut self.atk);
            let sev = &mut self.sevs[id];
            let enqueue_tick = sev.enqueue_tick.expect("queued SEV has an enqueue tick");
            sev.status = SevStatus::Charging;
            sev.busy_until_tick = tick + actual as u64;
            self.charge_target[id] = target;
            self.current_session[id] = self.sessions.len();
            self.sessions.push(SessionRecord {
                port_id: p,
                sev_id: id,
                enqueue_tick,
                start_tick: tick,
                true_duration,
                actual_duration: actual,
                initial_soc: initial,
                port_state: state.label(),
            });
            self.started_this_tick.push((tick - enqueue_tick, actual));
        }
        Ok(())
    }

    fn session_index(&self, id: SevId) -> usize {
        self.current_session[id]
    }

    // ---- repositioning ---------------------------------------------------------

    fn reposition(&mut self, tick: u64) {
        for s in &self.sevs {
            if s.status == SevStatus::Idle {
                self.tracker.record_idle(s.zone);
            }
        }
        let interval = self.cfg.reposition_interval_min;
        let mut gaps: Option<Vec<f64>> = None;
        for id in 0..self.sevs.len() {
            let s = &self.sevs[id];
            if s.status != SevStatus::Idle
                || s.soc <= self.cfg.charge_trigger_soc
                || s.last_reposition_tick.is_some_and(|t| tick < t + interval)
            {
                continue;
            }
            let gaps = gaps.get_or_insert_with(|| self.tracker.gaps());
            let zone = s.zone;
            let target = mobility::choose_reposition(zone, gaps, &self.table, self.mob.random());
            self.sevs[id].last_reposition_tick = Some(tick);
            if target == zone {
                continue;
            }
            let minutes = self.table.get(zone, target);
            if minutes == 0 {
                self.sevs[id].zone = target;
                continue;
            }
            let miles = self.deadhead_miles(minutes);
            self.start_leg(id, target, tick, minutes, miles, SevStatus::Cruising);
        }
    }

    // ---- attack and detection --------------------------------------------------

    fn launch(&mut self, tick: u64) -> Result<()> {
        if let Some(dc) = &self.detector_cfg {
            self.detector = Some(anomaly::train(&self.training, dc, &mut self.det_rng)?);
        }
        if self.cfg.attack.enabled {
            attack::launch(&mut self.ports, tick, &self.attack_cfg);
        }
        Ok(())
    }

    /// Sessions the detector sees for `port` at `tick`.
    fn batch(&self, port: &EvsePort, tick: u64, window: u64) -> Vec<ChargingFeature> {
        let from = tick.saturating_sub(window);
        self.port_history[port.id]
            .iter()
            .filter(|s| s.end_tick > from && s.end_tick >= port.history_reset_tick)
            .map(|s| s.feature)
            .collect()
    }

    fn epoch(&mut self, tick: u64) -> Result<()> {
        let mut flags = BTreeSet::new();
        if let Some(det) = &self.detector {
            self.detection_epochs += 1;
            let label = det.kind().label();
            for port in self.ports.iter().filter(|p| p.in_service()) {
                let batch = self.batch(port, tick, det.config.window_min);
                let flag = det.detect_port(&batch);
                let truth = port.epidemic == EpidemicState::I;
                if batch.len() >= det.config.min_batch {
                    self.tally.record(flag, truth);
                }
                if flag {
                    flags.insert(port.id);
                }
                self.detections.push(DetectionRecord {
                    epoch_tick: tick,
                    detector: label,
                    port_id: port.id,
                    flag: flag as u8,
                    truth: truth as u8,
                    batch_size: batch.len(),
                });
            }
        }
        let infectious_before = self.ports.iter().filter(|p| p.epidemic == EpidemicState::I).count();
        let log = attack::step_epidemic(&mut self.ports, tick, &self.attack_cfg, &flags, &mut self.atk)?;
        self.stats.record_epoch(&self.ports, &log, infectious_before);
        // queued SEVs at removed ports choose again
        for port in log.removed().collect::<Vec<_>>() {
            let queued: Vec<SevId> = self.ports[port].queue.drain(..).collect();
            for id in queued {
                self.send_to_charger(id, tick)?;
            }
        }
        Ok(())
    }

    // ---- metrics -----------------------------------------------------------------

    fn record_metrics(&mut self, tick: u64) {
        while self
            .recent_outcomes
            .front()
            .is_some_and(|(t, _)| *t + FULFILLMENT_WINDOW_MIN <= tick)
        {
            self.recent_outcomes.pop_front();
        }
        let fulfilled = self.recent_outcomes.iter().filter(|(_, f)| *f).count();
        let fulfillment_rate = if self.recent_outcomes.is_empty() {
            1.0
        } else {
            fulfilled as f64 / self.recent_outcomes.len() as f64
        };
        let mut counts = [0usize; 8];
        for s in &self.sevs {
            counts[SevStatus::ALL.iter().position(|x| *x == s.status).expect("known status")] += 1;
        }
        let count = |e| self.ports.iter().filter(|p| p.epidemic == e).count();
        let (n_s, n_i, n_r) = (count(EpidemicState::S), count(EpidemicState::I), count(EpidemicState::R));
        let serving = self.ports.iter().filter(|p| p.in_service() && p.serving.is_some()).count();
        let mean = |f: fn(&(u64, u32)) -> f64, v: &[(u64, u32)]| {
            (!v.is_empty()).then(|| v.iter().map(f).sum::<f64>() / v.len() as f64)
        };
        debug_assert_eq!(
            self.open.len() as u64 + self.assigned_active as u64 + self.fulfilled_total + self.expired_total,
            self.arrived_total
        );
        self.metrics.push(MetricsFrame {
            tick,
            arrived_total: self.arrived_total,
            open_requests: self.open.len(),
            assigned_requests: self.assigned_active,
            fulfilled_total: self.fulfilled_total,
            expired_total: self.expired_total,
            fulfillment_rate,
            sev_occupancy: counts[3] as f64 / self.sevs.len() as f64,
            evse_occupancy: if n_s + n_i == 0 { 0.0 } else { serving as f64 / (n_s + n_i) as f64 },
            mean_queue_time: mean(|x| x.0 as f64, &self.started_this_tick),
            mean_charge_duration: mean(|x| x.1 as f64, &self.started_this_tick),
            revenue_usd: self.revenue_cents as f64 / 100.0,
            idle: counts[0],
            cruising: counts[1],
            dispatching: counts[2],
            occupied: counts[3],
            to_charger: counts[4],
            queued: counts[5],
            charging: counts[6],
            stranded: counts[7],
            n_s,
            n_i,
            n_r,
        });
    }

    fn finish(self, world: &World, seed: u64) -> RunOutput {
        let cfg = self.cfg;
        let horizon = cfg.horizon_min();
        let start = cfg.warmup_min().max(horizon.saturating_sub(FINAL_WINDOW_DAYS * MINUTES_PER_DAY));
        let window_days = (horizon - start) as f64 / MINUTES_PER_DAY as f64;
        let window_cents: u64 = self
            .trip_log
            .iter()
            .filter(|t| t.dropoff_tick >= start)
            .map(|t| t.fare_cents)
            .sum();
        let window_usd = window_cents as f64 / 100.0;
        let weekly = window_usd * FINAL_WINDOW_DAYS as f64 / window_days;
        let fleet = cfg.fleet_size as f64;

        let in_window: Vec<&SessionRecord> = self.sessions.iter().filter(|s| s.start_tick >= start).collect();
        let mean_of = |v: Vec<f64>| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
        let queue_mean = mean_of(in_window.iter().map(|s| s.queue_time() as f64).collect());
        let duration_mean = mean_of(in_window.iter().map(|s| s.actual_duration as f64).collect());
        let (mut ok, mut lost) = (0u64, 0u64);
        for t in self.trips.iter().filter(|t| t.request_tick >= start) {
            match t.status {
                TripStatus::Fulfilled => ok += 1,
                TripStatus::Expired => lost += 1,
                _ => {}
            }
        }

        let detection = self.detector.as_ref().map(|d| {
            let s = self.tally.evaluate();
            let negatives = self.tally.fp + self.tally.tn;
            DetectionSummary {
                detector: d.kind().label().to_string(),
                alpha: d.config.alpha,
                tally: self.tally,
                accuracy: s.accuracy,
                precision: s.precision,
                recall: s.recall,
                f1: s.f1,
                epochs: self.detection_epochs,
                false_alarm_rate: if negatives == 0 { 0.0 } else { self.tally.fp as f64 / negatives as f64 },
            }
        });

        let summary = RunSummary {
            seed,
            scale: cfg.scale.to_string(),
            world_fingerprint: world.fingerprint(),
            fleet_size: cfg.fleet_size,
            n_ports: self.ports.len(),
            horizon_days: cfg.horizon_days,
            warmup_days: cfg.warmup_days,
            attack_enabled: cfg.attack.enabled,
            delay_mean_min: if cfg.attack.enabled { cfg.attack.delay_mean_min } else { 0.0 },
            detector: self.detector_cfg.as_ref().map(|d| d.kind.label().to_string()),
            alpha: self.detector_cfg.as_ref().map(|d| d.alpha),
            final_window_start: start,
            final_window_days: window_days,
            final_window_revenue_usd: window_usd,
            final_window_revenue_per_driver_usd: window_usd / fleet,
            weekly_revenue_usd: weekly,
            weekly_revenue_per_driver_usd: weekly / fleet,
            total_revenue_usd: self.revenue_cents as f64 / 100.0,
            total_revenue_cents: self.revenue_cents,
            daily_revenue_usd: self.daily_revenue_cents.iter().map(|c| *c as f64 / 100.0).collect(),
            trips_requested: self.arrived_total,
            trips_fulfilled: self.fulfilled_total,
            trips_expired: self.expired_total,
            final_window_fulfillment_rate: if ok + lost == 0 { 1.0 } else { ok as f64 / (ok + lost) as f64 },
            final_window_mean_queue_time_min: queue_mean,
            final_window_mean_charge_duration_min: duration_mean,
            sessions: self.sessions.len() as u64,
            infected_sessions: self.sessions.iter().filter(|s| s.infected()).count() as u64,
            stranded_events: self.stranded_events,
            repair_visits: self.stats.total_visits,
            repair_cost_usd: self.stats.total_cost_usd(),
            repair_cost_cents: self.stats.total_cost_cents(),
            recovery_rate: self.stats.recovery_rate(),
            detection,
            sir: self.stats.epochs.clone(),
        };
        RunOutput {
            summary,
            metrics: self.metrics,
            sessions: self.sessions,
            trips: self.trip_log,
            epidemic: self.stats.epochs.iter().map(EpidemicRecord::from).collect(),
            detections: self.detections,
            detector_summary: self.detector.as_ref().map(Detector::summary),
        }
    }
}
