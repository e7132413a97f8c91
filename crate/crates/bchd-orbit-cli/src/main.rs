//! Batch front-end: load a model + schedule config and run any pipeline
//! (series build, equilibrium chain, shooting, scans, certificates,
//! simulation), emitting reports and plot-ready CSV.

mod commands;
mod config;

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};

use commands::{resolve_out_dir, RunOutcome};
use config::RunConfig;

#[derive(Parser)]
#[command(
    name = "bchd-orbit",
    version,
    about = "Periodic orbits of switched control-affine systems: series builds, solvers, certificates, simulations"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(clap::Args)]
struct Common {
    /// run configuration file (TOML)
    #[arg(long)]
    config: PathBuf,
    /// output directory (overrides the config's [output].dir)
    #[arg(long)]
    out: Option<PathBuf>,
    /// worker threads for grid scans (0 = automatic)
    #[arg(long)]
    threads: Option<usize>,
    /// override the series truncation order
    #[arg(long)]
    order: Option<usize>,
    /// override the series construction: general | appendix | recursive
    #[arg(long)]
    method: Option<String>,
}

#[derive(Subcommand)]
enum Cmd {
    /// Build a Lie series and write its term dump
    Series(Common),
    /// Equilibrium chain over truncation orders, with optional shooting polish
    Find(Common),
    /// Divergence scans and contraction certificates
    Certify(Common),
    /// Multi-period simulations and closed-orbit sweeps
    Simulate(Common),
    /// Run the full bundled case-study pipeline
    #[command(name = "reproduce-paper")]
    ReproducePaper {
        /// output directory
        #[arg(long, default_value = "out")]
        out: PathBuf,
        /// worker threads for grid scans (0 = automatic)
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn init_threads(threads: Option<usize>) {
    if let Some(n) = threads {
        if n > 0 {
            let _ = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global();
        }
    }
}

fn load_config(common: &Common) -> Result<RunConfig> {
    let text = std::fs::read_to_string(&common.config)
        .map_err(|e| anyhow::anyhow!("reading {}: {e}", common.config.display()))?;
    let mut cfg = RunConfig::from_toml(&text)?;
    if let Some(order) = common.order {
        cfg.series.order = order;
    }
    if let Some(method) = &common.method {
        cfg.series.method = method.clone();
        cfg.validate()?;
    }
    init_threads(common.threads.or(Some(cfg.run.threads)));
    Ok(cfg)
}

fn run() -> Result<RunOutcome> {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("BCHD_ORBIT_LOG", "warn"))
        .init();
    let cli = Cli::parse();
    match &cli.cmd {
        Cmd::Series(common) => {
            let cfg = load_config(common)?;
            commands::cmd_series(&cfg, &resolve_out_dir(Some(&cfg), common.out.as_ref()))
        }
        Cmd::Find(common) => {
            let cfg = load_config(common)?;
            commands::cmd_find(&cfg, &resolve_out_dir(Some(&cfg), common.out.as_ref()))
        }
        Cmd::Certify(common) => {
            let cfg = load_config(common)?;
            commands::cmd_certify(&cfg, &resolve_out_dir(Some(&cfg), common.out.as_ref()))
        }
        Cmd::Simulate(common) => {
            let cfg = load_config(common)?;
            commands::cmd_simulate(&cfg, &resolve_out_dir(Some(&cfg), common.out.as_ref()))
        }
        Cmd::ReproducePaper { out, threads } => {
            init_threads(*threads);
            commands::cmd_reproduce(out)
        }
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(outcome) => ExitCode::from(outcome.exit_code()),
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(1)
        }
    }
}
