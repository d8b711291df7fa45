//! Configuration layering: scale preset, then the config file, then
//! command-line overrides.

use std::fmt;
use std::path::{Path, PathBuf};

use esms_core::{ConfigError, Scale, ScenarioConfig};

/// A required input path that does not exist.
#[derive(Debug)]
pub struct MissingInput(pub PathBuf);

impl fmt::Display for MissingInput {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "input not found: {}", self.0.display())
    }
}

impl std::error::Error for MissingInput {}

/// Everything on the command line that can change a [`ScenarioConfig`].
#[derive(Debug, Clone, Default)]
pub struct Overrides {
    pub config: Option<PathBuf>,
    pub scale: Option<Scale>,
    pub seeds: Vec<u64>,
    /// `0` turns the attack off.
    pub delay_min: Option<f64>,
    /// A detector name or `none`.
    pub detector: Option<String>,
    pub alpha: Option<f64>,
    /// Raw `key=value` pairs applied last.
    pub sets: Vec<String>,
}

impl Overrides {
    pub fn resolve(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut cfg = ScenarioConfig::preset(self.scale.unwrap_or(Scale::Desk));
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: path.clone(),
                source,
            })?;
            cfg.apply_str(&text)?;
            anchor_world_paths(&mut cfg, path.parent().unwrap_or(Path::new(".")));
            if let Some(scale) = self.scale {
                if scale != cfg.scale {
                    cfg.set("scale", &scale.to_string())?;
                }
            }
        }
        if !self.seeds.is_empty() {
            let list: Vec<String> = self.seeds.iter().map(u64::to_string).collect();
            cfg.set("seeds", &list.join(","))?;
        }
        if let Some(d) = self.delay_min {
            if d == 0.0 {
                cfg.set("attack.enabled", "false")?;
            } else {
                cfg.set("attack.enabled", "true")?;
                cfg.set("attack.delay_mean_min", &d.to_string())?;
            }
        }
        if let Some(k) = &self.detector {
            cfg.set("detector.kind", k)?;
        }
        if let Some(a) = self.alpha {
            cfg.set("detector.alpha", &a.to_string())?;
        }
        for kv in &self.sets {
            let (k, v) = kv.split_once('=').ok_or_else(|| ConfigError::Syntax {
                line: 0,
                text: kv.clone(),
            })?;
            cfg.set(k.trim(), v.trim())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// World files named in a config file are relative to that file.
fn anchor_world_paths(cfg: &mut ScenarioConfig, base: &Path) {
    let w = &mut cfg.world;
    for p in [&mut w.zones_csv, &mut w.ports_csv, &mut w.trips_csv, &mut w.travel_matrix_csv]
        .into_iter()
        .flatten()
    {
        if p.is_relative() {
            *p = base.join(&*p);
        }
    }
}
