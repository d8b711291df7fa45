//! Scenario configuration and its flat `key = value` file format.
//!
//! Lines are `dotted.key = value`; `#` starts a comment. Unknown keys and
//! unparsable values are rejected with the offending key in the message.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::anomaly::{DetectorConfig, DetectorKind};
use crate::attack::{AttackConfig, InitialState};
use crate::battery::{BatteryModel, ChargeTarget};
use crate::mobility::FareSchedule;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("unknown config key `{key}`")]
    UnknownKey { key: String },
    #[error("invalid value `{value}` for key `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },
    #[error("line {line}: expected `key = value`, got `{text}`")]
    Syntax { line: usize, text: String },
    #[error("cannot read config file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    /// The key a validation or parse error refers to, if any.
    pub fn key(&self) -> Option<&str> {
        match self {
            ConfigError::UnknownKey { key } | ConfigError::InvalidValue { key, .. } => Some(key),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Scale {
    Desk,
    Full,
}

impl FromStr for Scale {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "desk" => Ok(Scale::Desk),
            "full" => Ok(Scale::Full),
            _ => Err("expected `desk` or `full`".into()),
        }
    }
}

impl fmt::Display for Scale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Scale::Desk => "desk",
            Scale::Full => "full",
        })
    }
}

/// Synthetic world size, or the CSV files of an ingested one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldConfig {
    pub n_zones: usize,
    pub n_ports: usize,
    /// Mean trip requests per minute over a day.
    pub demand_rate_per_min: f64,
    pub zone_spacing_miles: f64,
    pub speed_mph: f64,
    pub zones_csv: Option<PathBuf>,
    pub ports_csv: Option<PathBuf>,
    pub trips_csv: Option<PathBuf>,
    pub travel_matrix_csv: Option<PathBuf>,
    /// Fraction of CSV trips kept when ingesting.
    pub trip_sample_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub scale: Scale,
    pub fleet_size: usize,
    pub world: WorldConfig,
    pub horizon_days: u64,
    pub warmup_days: u64,
    pub seeds: Vec<u64>,
    pub dispatch_radius_min: u32,
    pub max_wait_min: u64,
    pub charge_trigger_soc: f64,
    pub queue_abandon_min: u64,
    /// Minimum gap between two repositioning moves of one SEV.
    pub reposition_interval_min: u64,
    /// Trailing window of the supply/demand tracker.
    pub supply_demand_window_min: u64,
    /// Trailing window of the per-port mean session duration.
    pub service_window_min: u64,
    /// Session-length estimate for ports with no recent sessions.
    pub cold_start_session_min: f64,
    pub stranded_outage_min: u64,
    pub stranded_recovery_soc: f64,
    pub initial_soc_min: f64,
    pub initial_soc_max: f64,
    pub battery: BatteryModel,
    pub charge_target: ChargeTarget,
    pub attack: AttackConfig,
    /// `None` runs without anomaly detection.
    pub detector: Option<DetectorKind>,
    /// Overrides the detector's default sensitivity.
    pub detector_alpha: Option<f64>,
    pub detector_params: DetectorConfig,
    pub fare: FareSchedule,
    pub repair_cost_usd: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self::preset(Scale::Desk)
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: fmt::Display,
{
    value.parse::<T>().map_err(|e| ConfigError::InvalidValue {
        key: key.into(),
        value: value.into(),
        reason: e.to_string(),
    })
}

fn parse_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty() && value != "none").then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map_or_else(|| "none".into(), |p| p.display().to_string())
}

fn show_opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "none".into(), |v| v.to_string())
}

impl ScenarioConfig {
    pub fn preset(scale: Scale) -> Self {
        let (fleet, zones, ports, demand, days, warmup) = match scale {
            Scale::Desk => (100, 60, 20, 6.0, 7, 1),
            Scale::Full => (1400, 1347, 215, 12.9, 28, 7),
        };
        Self {
            scale,
            fleet_size: fleet,
            world: WorldConfig {
                n_zones: zones,
                n_ports: ports,
                demand_rate_per_min: demand,
                zone_spacing_miles: 0.6,
                speed_mph: 12.0,
                zones_csv: None,
                ports_csv: None,
                trips_csv: None,
                travel_matrix_csv: None,
                trip_sample_fraction: 0.25,
            },
            horizon_days: days,
            warmup_days: warmup,
            seeds: vec![1, 2, 3],
            dispatch_radius_min: 20,
            max_wait_min: 10,
            charge_trigger_soc: 0.20,
            queue_abandon_min: 30,
            reposition_interval_min: 15,
            supply_demand_window_min: 15,
            service_window_min: 1440,
            cold_start_session_min: 25.0,
            stranded_outage_min: 60,
            stranded_recovery_soc: 0.05,
            initial_soc_min: 0.2,
            initial_soc_max: 0.78,
            battery: BatteryModel::default(),
            charge_target: ChargeTarget::default(),
            attack: AttackConfig::default(),
            detector: None,
            detector_alpha: None,
            detector_params: DetectorConfig::new(DetectorKind::Kld),
            fare: FareSchedule::default(),
            repair_cost_usd: 1.78,
        }
    }

    pub fn horizon_min(&self) -> u64 {
        self.horizon_days * crate::MINUTES_PER_DAY
    }

    pub fn warmup_min(&self) -> u64 {
        self.warmup_days * crate::MINUTES_PER_DAY
    }

    pub fn repair_cost_cents(&self) -> u64 {
        (self.repair_cost_usd * 100.0).round() as u64
    }

    /// Effective detector configuration, if detection is on.
    pub fn detector_config(&self) -> Option<DetectorConfig> {
        self.detector.map(|kind| {
            let mut c = self.detector_params.clone();
            c.kind = kind;
            c.alpha = self.detector_alpha.unwrap_or_else(|| kind.default_alpha());
            c
        })
    }

    /// Sets one key. Values use the same syntax as the config file.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), ConfigError> {
        let v = value.trim();
        let d = &mut self.detector_params;
        match key {
            "scale" => {
                // a scale line resets size-dependent defaults
                let scale: Scale = parse(key, v)?;
                let p = Self::preset(scale);
                self.scale = scale;
                self.fleet_size = p.fleet_size;
                self.world.n_zones = p.world.n_zones;
                self.world.n_ports = p.world.n_ports;
                self.world.demand_rate_per_min = p.world.demand_rate_per_min;
                self.horizon_days = p.horizon_days;
                self.warmup_days = p.warmup_days;
            }
            "fleet_size" => self.fleet_size = parse(key, v)?,
            "world.n_zones" => self.world.n_zones = parse(key, v)?,
            "world.n_ports" => self.world.n_ports = parse(key, v)?,
            "world.demand_rate_per_min" => self.world.demand_rate_per_min = parse(key, v)?,
            "world.zone_spacing_miles" => self.world.zone_spacing_miles = parse(key, v)?,
            "world.speed_mph" => self.world.speed_mph = parse(key, v)?,
            "world.zones_csv" => self.world.zones_csv = parse_path(v),
            "world.ports_csv" => self.world.ports_csv = parse_path(v),
            "world.trips_csv" => self.world.trips_csv = parse_path(v),
            "world.travel_matrix_csv" => self.world.travel_matrix_csv = parse_path(v),
            "world.trip_sample_fraction" => self.world.trip_sample_fraction = parse(key, v)?,
            "horizon_days" => self.horizon_days = parse(key, v)?,
            "warmup_days" => self.warmup_days = parse(key, v)?,
            "seeds" => {
                self.seeds = v
                    .split(',')
                    .map(|s| parse::<u64>(key, s.trim()))
                    .collect::<Result<_, _>>()?
            }
            "dispatch_radius_min" => self.dispatch_radius_min = parse(key, v)?,
            "max_wait_min" => self.max_wait_min = parse(key, v)?,
            "charge_trigger_soc" => self.charge_trigger_soc = parse(key, v)?,
            "queue_abandon_min" => self.queue_abandon_min = parse(key, v)?,
            "reposition_interval_min" => self.reposition_interval_min = parse(key, v)?,
            "supply_demand_window_min" => self.supply_demand_window_min = parse(key, v)?,
            "service_window_min" => self.service_window_min = parse(key, v)?,
            "cold_start_session_min" => self.cold_start_session_min = parse(key, v)?,
            "stranded_outage_min" => self.stranded_outage_min = parse(key, v)?,
            "stranded_recovery_soc" => self.stranded_recovery_soc = parse(key, v)?,
            "initial_soc_min" => self.initial_soc_min = parse(key, v)?,
            "initial_soc_max" => self.initial_soc_max = parse(key, v)?,
            "battery.capacity_kwh" => self.battery.capacity_kwh = parse(key, v)?,
            "battery.range_miles" => self.battery.range_miles = parse(key, v)?,
            "battery.cc_rate_mi_per_min" => self.battery.cc_rate_miles_per_min = parse(key, v)?,
            "battery.soc_tip" => self.battery.soc_tip = parse(key, v)?,
            "charge_target.mean" => self.charge_target.mean = parse(key, v)?,
            "charge_target.sd" => self.charge_target.sd = parse(key, v)?,
            "charge_target.max" => self.charge_target.max = parse(key, v)?,
            "attack.enabled" => self.attack.enabled = parse(key, v)?,
            "attack.beta" => self.attack.beta = parse(key, v)?,
            "attack.delay_mean_min" => self.attack.delay_mean_min = parse(key, v)?,
            "attack.delay_sd_min" => {
                self.attack.delay_sd_min = if v == "none" { None } else { Some(parse(key, v)?) }
            }
            "attack.infection_epoch_min" => self.attack.infection_epoch_min = parse(key, v)?,
            "attack.repair_duration_min" => self.attack.repair_duration_min = parse(key, v)?,
            "attack.initial_state" => {
                self.attack.initial_state = match v {
                    "all_infectious" => InitialState::AllInfectious,
                    "all_susceptible" => InitialState::AllSusceptible,
                    _ => {
                        return Err(ConfigError::InvalidValue {
                            key: key.into(),
                            value: v.into(),
                            reason: "expected `all_infectious` or `all_susceptible`".into(),
                        })
                    }
                }
            }
            "detector.kind" => self.detector = if v == "none" { None } else { Some(parse(key, v)?) },
            "detector.alpha" => self.detector_alpha = if v == "none" { None } else { Some(parse(key, v)?) },
            "detector.n_trees" => d.n_trees = parse(key, v)?,
            "detector.subsample" => d.subsample = parse(key, v)?,
            "detector.bins_per_dim" => d.bins_per_dim = parse(key, v)?,
            "detector.k_clusters" => d.k_clusters = parse(key, v)?,
            "detector.distance_threshold" => d.distance_threshold = parse(key, v)?,
            "detector.n_components" => d.n_components = parse(key, v)?,
            "detector.density_threshold" => d.density_threshold = parse(key, v)?,
            "detector.pcc_significance" => d.pcc_significance = parse(key, v)?,
            "detector.window_min" => d.window_min = parse(key, v)?,
            "detector.min_batch" => d.min_batch = parse(key, v)?,
            "economics.per_mile_usd" => self.fare.per_mile_usd = parse(key, v)?,
            "economics.per_min_usd" => self.fare.per_min_usd = parse(key, v)?,
            "economics.repair_cost_usd" => self.repair_cost_usd = parse(key, v)?,
            _ => return Err(ConfigError::UnknownKey { key: key.into() }),
        }
        Ok(())
    }

    /// Every key with its current value, in file order.
    pub fn entries(&self) -> Vec<(&'static str, String)> {
        let d = &self.detector_params;
        vec![
            ("scale", self.scale.to_string()),
            ("fleet_size", self.fleet_size.to_string()),
            ("world.n_zones", self.world.n_zones.to_string()),
            ("world.n_ports", self.world.n_ports.to_string()),
            ("world.demand_rate_per_min", self.world.demand_rate_per_min.to_string()),
            ("world.zone_spacing_miles", self.world.zone_spacing_miles.to_string()),
            ("world.speed_mph", self.world.speed_mph.to_string()),
            ("world.zones_csv", show_path(&self.world.zones_csv)),
            ("world.ports_csv", show_path(&self.world.ports_csv)),
            ("world.trips_csv", show_path(&self.world.trips_csv)),
            ("world.travel_matrix_csv", show_path(&self.world.travel_matrix_csv)),
            ("world.trip_sample_fraction", self.world.trip_sample_fraction.to_string()),
            ("horizon_days", self.horizon_days.to_string()),
            ("warmup_days", self.warmup_days.to_string()),
            (
                "seeds",
                self.seeds.iter().map(u64::to_string).collect::<Vec<_>>().join(","),
            ),
            ("dispatch_radius_min", self.dispatch_radius_min.to_string()),
            ("max_wait_min", self.max_wait_min.to_string()),
            ("charge_trigger_soc", self.charge_trigger_soc.to_string()),
            ("queue_abandon_min", self.queue_abandon_min.to_string()),
            ("reposition_interval_min", self.reposition_interval_min.to_string()),
            ("supply_demand_window_min", self.supply_demand_window_min.to_string()),
            ("service_window_min", self.service_window_min.to_string()),
            ("cold_start_session_min", self.cold_start_session_min.to_string()),
            ("stranded_outage_min", self.stranded_outage_min.to_string()),
            ("stranded_recovery_soc", self.stranded_recovery_soc.to_string()),
            ("initial_soc_min", self.initial_soc_min.to_string()),
            ("initial_soc_max", self.initial_soc_max.to_string()),
            ("battery.capacity_kwh", self.battery.capacity_kwh.to_string()),
            ("battery.range_miles", self.battery.range_miles.to_string()),
            ("battery.cc_rate_mi_per_min", self.battery.cc_rate_miles_per_min.to_string()),
            ("battery.soc_tip", self.battery.soc_tip.to_string()),
            ("charge_target.mean", self.charge_target.mean.to_string()),
            ("charge_target.sd", self.charge_target.sd.to_string()),
            ("charge_target.max", self.charge_target.max.to_string()),
            ("attack.enabled", self.attack.enabled.to_string()),
            ("attack.beta", self.attack.beta.to_string()),
            ("attack.delay_mean_min", self.attack.delay_mean_min.to_string()),
            ("attack.delay_sd_min", show_opt(&self.attack.delay_sd_min)),
            ("attack.infection_epoch_min", self.attack.infection_epoch_min.to_string()),
            ("attack.repair_duration_min", self.attack.repair_duration_min.to_string()),
            (
                "attack.initial_state",
                match self.attack.initial_state {
                    InitialState::AllInfectious => "all_infectious".into(),
                    InitialState::AllSusceptible => "all_susceptible".into(),
                },
            ),
            ("detector.kind", show_opt(&self.detector)),
            ("detector.alpha", show_opt(&self.detector_alpha)),
            ("detector.n_trees", d.n_trees.to_string()),
            ("detector.subsample", d.subsample.to_string()),
            ("detector.bins_per_dim", d.bins_per_dim.to_string()),
            ("detector.k_clusters", d.k_clusters.to_string()),
            ("detector.distance_threshold", d.distance_threshold.to_string()),
            ("detector.n_components", d.n_components.to_string()),
            ("detector.density_threshold", d.density_threshold.to_string()),
            ("detector.pcc_significance", d.pcc_significance.to_string()),
            ("detector.window_min", d.window_min.to_string()),
            ("detector.min_batch", d.min_batch.to_string()),
            ("economics.per_mile_usd", self.fare.per_mile_usd.to_string()),
            ("economics.per_min_usd", self.fare.per_min_usd.to_string()),
            ("economics.repair_cost_usd", self.repair_cost_usd.to_string()),
        ]
    }

    /// Renders the configuration in the file format; parsing it back gives
    /// an equal value.
    pub fn to_conf_string(&self) -> String {
        self.entries()
            .into_iter()
            .map(|(k, v)| format!("{k} = {v}\n"))
            .collect()
    }

    /// Applies the lines of a config file on top of `self`.
    pub fn apply_str(&mut self, text: &str) -> Result<(), ConfigError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: i + 1,
                text: raw.to_string(),
            })?;
            self.set(k.trim(), v.trim())?;
        }
        Ok(())
    }

    /// Desk defaults overridden by the file. A `scale` line, if present,
    /// should come first since it resets the size defaults.
    pub fn from_conf_str(text: &str) -> Result<Self, ConfigError> {
        let mut cfg = Self::default();
        cfg.apply_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_conf_str(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let bad = |key: &str, value: String, reason: &str| {
            Err(ConfigError::InvalidValue {
                key: key.into(),
                value,
                reason: reason.into(),
            })
        };
        let frac = |x: f64| (0.0..=1.0).contains(&x);
        if self.fleet_size == 0 {
            return bad("fleet_size", "0".into(), "must be positive");
        }
        if self.world.n_zones == 0 {
            return bad("world.n_zones", "0".into(), "must be positive");
        }
        if self.world.n_ports == 0 {
            return bad("world.n_ports", "0".into(), "must be positive");
        }
        if !(self.world.demand_rate_per_min >= 0.0) {
            return bad("world.demand_rate_per_min", self.world.demand_rate_per_min.to_string(), "must be non-negative");
        }
        if !(self.world.speed_mph > 0.0) {
            return bad("world.speed_mph", self.world.speed_mph.to_string(), "must be positive");
        }
        if !(self.world.zone_spacing_miles > 0.0) {
            return bad("world.zone_spacing_miles", self.world.zone_spacing_miles.to_string(), "must be positive");
        }
        if !frac(self.world.trip_sample_fraction) {
            return bad("world.trip_sample_fraction", self.world.trip_sample_fraction.to_string(), "must lie in [0, 1]");
        }
        if self.horizon_days == 0 {
            return bad("horizon_days", "0".into(), "must be positive");
        }
        if self.warmup_days == 0 || self.warmup_days >= self.horizon_days {
            return bad("warmup_days", self.warmup_days.to_string(), "must be positive and shorter than the horizon");
        }
        if self.seeds.is_empty() {
            return bad("seeds", String::new(), "at least one seed is required");
        }
        for (key, v) in [
            ("dispatch_radius_min", self.dispatch_radius_min as u64),
            ("max_wait_min", self.max_wait_min),
            ("queue_abandon_min", self.queue_abandon_min),
            ("reposition_interval_min", self.reposition_interval_min),
            ("supply_demand_window_min", self.supply_demand_window_min),
            ("service_window_min", self.service_window_min),
            ("stranded_outage_min", self.stranded_outage_min),
            ("attack.infection_epoch_min", self.attack.infection_epoch_min),
            ("attack.repair_duration_min", self.attack.repair_duration_min),
            ("detector.window_min", self.detector_params.window_min),
        ] {
            if v == 0 {
                return bad(key, "0".into(), "durations must be positive");
            }
        }
        for (key, v) in [
            ("charge_trigger_soc", self.charge_trigger_soc),
            ("stranded_recovery_soc", self.stranded_recovery_soc),
            ("initial_soc_min", self.initial_soc_min),
            ("initial_soc_max", self.initial_soc_max),
            ("charge_target.max", self.charge_target.max),
            ("attack.beta", self.attack.beta),
        ] {
            if !frac(v) {
                return bad(key, v.to_string(), "must lie in [0, 1]");
            }
        }
        if self.initial_soc_min > self.initial_soc_max {
            return bad("initial_soc_min", self.initial_soc_min.to_string(), "exceeds initial_soc_max");
        }
        if !(self.battery.soc_tip > 0.0 && self.battery.soc_tip < 1.0) {
            return bad("battery.soc_tip", self.battery.soc_tip.to_string(), "must lie in (0, 1)");
        }
        if !(self.battery.range_miles > 0.0) {
            return bad("battery.range_miles", self.battery.range_miles.to_string(), "must be positive");
        }
        if !(self.battery.cc_rate_miles_per_min > 0.0) {
            return bad("battery.cc_rate_mi_per_min", self.battery.cc_rate_miles_per_min.to_string(), "must be positive");
        }
        if !(self.charge_target.sd >= 0.0) {
            return bad("charge_target.sd", self.charge_target.sd.to_string(), "must be non-negative");
        }
        if !(self.attack.delay_mean_min >= 0.0) {
            return bad("attack.delay_mean_min", self.attack.delay_mean_min.to_string(), "must be non-negative");
        }
        if let Some(sd) = self.attack.delay_sd_min {
            if !(sd >= 0.0) {
                return bad("attack.delay_sd_min", sd.to_string(), "must be non-negative");
            }
        }
        if !(self.cold_start_session_min > 0.0) {
            return bad("cold_start_session_min", self.cold_start_session_min.to_string(), "must be positive");
        }
        if self.fare.per_mile_usd < 0.0 || self.fare.per_min_usd < 0.0 {
            return bad("economics.per_mile_usd", self.fare.per_mile_usd.to_string(), "fares must be non-negative");
        }
        if !(self.repair_cost_usd >= 0.0) {
            return bad("economics.repair_cost_usd", self.repair_cost_usd.to_string(), "must be non-negative");
        }
        if let Some(c) = self.detector_config() {
            if !(c.alpha > 0.0) {
                return bad("detector.alpha", c.alpha.to_string(), "must be positive");
            }
            if c.min_batch == 0 {
                return bad("detector.min_batch", "0".into(), "must be positive");
            }
        }
        Ok(())
    }
}
