//! `squeezesim`: predictions, sweeps, simulations, fits, maps and Allan
//! deviations for feedback-stabilized parametric squeezing.
//!
//! Exit codes: 0 success, 2 validation error, 3 numerical failure.

mod commands;
mod config;
mod error;
mod output;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use crate::commands::Context;
use crate::config::{GridSpec, RunSection};
use crate::error::CliError;

#[derive(Debug, clap::Args)]
struct Common {
    /// Experiment configuration (TOML, or JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output file; stdout when omitted.
    #[arg(long)]
    out: Option<PathBuf>,
    /// First seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Number of consecutive seeds starting at --seed.
    #[arg(long)]
    seeds: Option<u64>,
    /// min:max:n[,log]; sweep values, map x then y, or Allan τ.
    #[arg(long, action = clap::ArgAction::Append)]
    grid: Vec<String>,
}

#[derive(Debug, Parser)]
#[command(name = "squeezesim", version, about = "Feedback-stabilized parametric squeezing toolkit")]
struct Invocation {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Debug, Subcommand)]
enum Sub {
    /// Closed-form variances, dB figures, purity and SNR.
    Predict(Common),
    /// Seeded sweep through simulate, Welch, Lorentzian fit and threshold fit.
    Sweep(Common),
    /// Write one simulated trace.
    Simulate(Common),
    /// Spectrum and Lorentzian fit of a trace (JSON report on stdout).
    Fit(Common),
    /// Purity, SNR or capacitive squeezing map.
    Map(Common),
    /// Allan deviation of a frequency record.
    Allan(Common),
}

fn seed_list(config_seeds: &[u64], seed: Option<u64>, count: Option<u64>) -> Result<Option<Vec<u64>>, CliError> {
    match (seed, count) {
        (None, None) => Ok(None),
        (_, Some(0)) => Err(CliError::field("--seeds", "must be at least 1")),
        (Some(s), None) => Ok(Some(vec![s])),
        (s, Some(k)) => {
            let start = s.unwrap_or_else(|| config_seeds.first().copied().unwrap_or(0));
            let end = start
                .checked_add(k)
                .ok_or_else(|| CliError::field("--seeds", "seed range overflows"))?;
            Ok(Some((start..end).collect()))
        }
    }
}

fn apply_grids(name: &str, cfg: &mut config::ExperimentConfig, grids: &[String]) -> Result<(), CliError> {
    if grids.is_empty() {
        return Ok(());
    }
    for g in grids {
        GridSpec::parse(g, "--grid")?;
    }
    let too_many = |n: usize| CliError::field("--grid", format!("{name} accepts at most {n} grid(s)"));
    match name {
        "sweep" => {
            let [g] = grids else { return Err(too_many(1)) };
            let s = cfg
                .sweep
                .as_mut()
                .ok_or_else(|| CliError::Validation("sweep: section required".into()))?;
            s.values = None;
            s.grid = Some(g.clone());
        }
        "map" => {
            if grids.len() > 2 {
                return Err(too_many(2));
            }
            let m = cfg
                .map
                .as_mut()
                .ok_or_else(|| CliError::Validation("map: section required".into()))?;
            m.x = Some(grids[0].clone());
            if let Some(y) = grids.get(1) {
                m.y = Some(y.clone());
            }
        }
        "allan" => {
            let [g] = grids else { return Err(too_many(1)) };
            let a = cfg
                .allan
                .as_mut()
                .ok_or_else(|| CliError::Validation("allan: section required".into()))?;
            a.taus = Some(GridSpec::parse(g, "--grid")?.values());
        }
        _ => return Err(CliError::field("--grid", format!("not used by {name}"))),
    }
    Ok(())
}

/// Caps the rayon pool from SQUEEZESIM_THREADS.
fn configure_threads() -> Result<(), CliError> {
    let Ok(v) = std::env::var("SQUEEZESIM_THREADS") else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|n| *n > 0)
        .ok_or_else(|| CliError::field("SQUEEZESIM_THREADS", format!("`{v}` is not a positive integer")))?;
    #[cfg(feature = "parallel")]
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Validation(format!("SQUEEZESIM_THREADS: {e}")))?;
    #[cfg(not(feature = "parallel"))]
    let _ = n;
    Ok(())
}

fn run(inv: Invocation) -> Result<(), CliError> {
    configure_threads()?;
    let (name, common, exec): (&'static str, Common, fn(&Context) -> Result<(), CliError>) = match inv.command {
        Sub::Predict(c) => ("predict", c, commands::predict),
        Sub::Sweep(c) => ("sweep", c, commands::sweep),
        Sub::Simulate(c) => ("simulate", c, commands::simulate),
        Sub::Fit(c) => ("fit", c, commands::fit),
        Sub::Map(c) => ("map", c, commands::map),
        Sub::Allan(c) => ("allan", c, commands::allan),
    };
    let mut loaded = config::load(&common.config)?;
    let cfg = &mut loaded.config;
    if let Some(seeds) = seed_list(&cfg.seeds(), common.seed, common.seeds)? {
        cfg.run.get_or_insert_with(RunSection::default).seeds = Some(seeds);
    }
    if cfg.run.as_ref().and_then(|r| r.seeds.as_ref()).is_some_and(Vec::is_empty) {
        return Err(CliError::field("run.seeds", "must not be empty"));
    }
    apply_grids(name, cfg, &common.grid)?;
    let hash = cfg.hash();
    exec(&Context {
        command: name,
        loaded,
        out: common.out,
        hash,
    })
}

fn main() -> ExitCode {
    let inv = match Invocation::try_parse() {
        Ok(inv) => inv,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(2) } else { ExitCode::SUCCESS };
        }
    };
    match run(inv) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
