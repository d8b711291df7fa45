//! One run directory: outputs plus what is needed to replay them.

use std::path::Path;

use anyhow::{Context, Result};
use esms_core::domain::World;
use esms_core::{RunOutput, ScenarioConfig};

use crate::BUILD_STAMP;

pub const CONFIG_FILE: &str = "config.conf";
pub const SEED_FILE: &str = "seed.txt";
pub const STAMP_FILE: &str = "build.txt";
pub const SUMMARY_FILE: &str = "summary.json";

/// Runs `cfg` on `world` with `seed` and writes everything into `dir`.
/// The config snapshot is pinned to the single seed that ran.
pub fn run_into(cfg: &ScenarioConfig, world: &World, seed: u64, dir: &Path) -> Result<RunOutput> {
    let out = esms_core::run(cfg, world, seed).with_context(|| format!("run with seed {seed} failed"))?;
    write_run(cfg, seed, &out, dir)?;
    Ok(out)
}

pub fn write_run(cfg: &ScenarioConfig, seed: u64, out: &RunOutput, dir: &Path) -> Result<()> {
    out.write_to(dir)?;
    let mut snapshot = cfg.clone();
    snapshot.seeds = vec![seed];
    write(dir, CONFIG_FILE, &snapshot.to_conf_string())?;
    write(dir, SEED_FILE, &format!("{seed}\n"))?;
    write(dir, STAMP_FILE, &format!("{BUILD_STAMP}\n"))?;
    Ok(())
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    std::fs::write(&path, text).with_context(|| format!("cannot write {}", path.display()))
}
