use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use esms_cli::settings::Overrides;
use esms_cli::sweep::{self, DetectorSweep, SweepSpec};
use esms_cli::{exit_code, report, rundir, BUILD_STAMP};
use esms_core::anomaly::DetectorKind;
use esms_core::domain::{write_ports_csv, write_trips_csv, write_zones_csv};
use esms_core::engine::build_world;
use esms_core::{Scale, ScenarioConfig};

#[derive(Parser)]
#[command(name = "esms", version = BUILD_STAMP, about = "Shared electric fleet simulator under a delayed-charging attack")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario for each configured seed.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "runs/run")]
        out: PathBuf,
    },
    /// Run a grid of delays and detectors with paired baselines.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Baseline plus 5, 10 and 15 min delays, each without detection and
        /// with every detector at mid-range sensitivity.
        #[arg(long)]
        paper_grid: bool,
        /// Expand every detector to its full sensitivity sweep.
        #[arg(long)]
        alpha_grid: bool,
        /// Delays in minutes (ignored with --paper-grid).
        #[arg(long, value_delimiter = ',', default_values_t = [5.0, 10.0, 15.0])]
        delays: Vec<f64>,
        /// Detectors to include (ignored with --paper-grid).
        #[arg(long, value_delimiter = ',')]
        detectors: Vec<DetectorKind>,
        #[arg(long)]
        threads: Option<usize>,
        #[arg(long, default_value = "runs/sweep")]
        out: PathBuf,
    },
    /// Write a synthetic world as CSV files plus a config fragment using them.
    GenWorld {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "world")]
        out: PathBuf,
    },
    /// Check a configuration and print the effective values.
    ValidateConfig {
        #[command(flatten)]
        cfg: ConfigArgs,
    },
    /// Fold every run summary under a directory into a long-format CSV.
    Report {
        dir: PathBuf,
        /// Defaults to `report.csv` inside the directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct ConfigArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    scale: Option<Scale>,
    /// One or more seeds, comma separated.
    #[arg(long, value_delimiter = ',')]
    seed: Vec<u64>,
    /// Mean injected delay; 0 runs the attack-free baseline.
    #[arg(long)]
    delay_min: Option<f64>,
    /// IF, KLD, KMeans, GMM, PCC or none.
    #[arg(long)]
    detector: Option<String>,
    #[arg(long)]
    alpha: Option<f64>,
    /// Any config key, as key=value. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ScenarioConfig> {
        Overrides {
            config: self.config.clone(),
            scale: self.scale,
            seeds: self.seed.clone(),
            delay_min: self.delay_min,
            detector: self.detector.clone(),
            alpha: self.alpha,
            sets: self.sets.clone(),
        }
        .resolve()
        .map_err(Into::into)
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match dispatch(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::from(exit_code(&e))
        }
    }
}

/// The error chain on one line, skipping causes already quoted by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut text = String::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !text.contains(&msg) {
            if !text.is_empty() {
                text.push_str(": ");
            }
            text.push_str(&msg);
        }
    }
    text
}

fn dispatch(cmd: Command) -> Result<()> {
    match cmd {
        Command::Run { cfg, out } => {
            let cfg = cfg.resolve()?;
            for &seed in &cfg.seeds {
                let world = build_world(&cfg, seed)?;
                let dir = if cfg.seeds.len() == 1 {
                    out.clone()
                } else {
                    out.join(format!("seed-{seed}"))
                };
                let result = rundir::run_into(&cfg, &world, seed, &dir)?;
                let s = &result.summary;
                println!(
                    "seed {seed}: weekly revenue ${:.2} (${:.2} per driver), fulfillment {:.3}, mean queue {:.2} min, repair ${:.2} -> {}",
                    s.weekly_revenue_usd,
                    s.weekly_revenue_per_driver_usd,
                    s.final_window_fulfillment_rate,
                    s.final_window_mean_queue_time_min,
                    s.repair_cost_usd,
                    dir.display()
                );
            }
        }
        Command::Sweep {
            cfg,
            paper_grid,
            alpha_grid,
            delays,
            detectors,
            threads,
            out,
        } => {
            let base = cfg.resolve()?;
            let mut spec = if paper_grid {
                SweepSpec::paper_grid(base.seeds.clone())
            } else {
                SweepSpec {
                    delays,
                    detectors: detectors
                        .into_iter()
                        .map(|kind| DetectorSweep {
                            kind,
                            alphas: vec![kind.mid_alpha()],
                        })
                        .collect(),
                    seeds: base.seeds.clone(),
                    include_baseline: true,
                    include_no_detection: true,
                }
            };
            if alpha_grid {
                spec = spec.with_full_alpha_grid();
            }
            spec.validate(paper_grid)?;
            std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            let result = sweep::run_sweep(&base, &spec, &out, threads)?;
            println!("{} runs written under {}", result.outcomes.len(), out.display());
            for row in result.comparison() {
                println!(
                    "{:<22} revenue ${:>11.2}  loss {:>6}  repair ${:>9.2}",
                    row.scenario,
                    row.weekly_revenue_usd,
                    row.loss_pct.map_or("-".into(), |p| format!("{p:.2}%")),
                    row.repair_cost_usd
                );
            }
        }
        Command::GenWorld { cfg, out } => {
            let cfg = cfg.resolve()?;
            let seed = cfg.seeds[0];
            let world = build_world(&cfg, seed)?;
            std::fs::create_dir_all(&out).with_context(|| format!("cannot create {}", out.display()))?;
            write_zones_csv(&out.join("zones.csv"), &world.zones)?;
            write_ports_csv(&out.join("ports.csv"), &world.ports)?;
            write_trips_csv(&out.join("trips.csv"), &world.trips)?;
            let fragment = format!(
                "# synthetic world, seed {seed}\nscale = {}\nworld.zones_csv = zones.csv\nworld.ports_csv = ports.csv\nworld.trips_csv = trips.csv\nworld.trip_sample_fraction = 1\n",
                cfg.scale
            );
            let path = out.join("world.conf");
            std::fs::write(&path, fragment).with_context(|| format!("cannot write {}", path.display()))?;
            println!(
                "{} zones, {} ports, {} trips -> {}",
                world.zones.len(),
                world.ports.len(),
                world.trips.len(),
                out.display()
            );
        }
        Command::ValidateConfig { cfg } => {
            let cfg = cfg.resolve()?;
            print!("{}", cfg.to_conf_string());
        }
        Command::Report { dir, out } => {
            let dest = out.unwrap_or_else(|| dir.join("report.csv"));
            let n = report::write_report(&dir, &dest)?;
            println!("{n} rows -> {}", dest.display());
        }
    }
    Ok(())
}
