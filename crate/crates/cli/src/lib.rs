//! Batch front-end: configuration, subcommands and file output.

#![allow(clippy::neg_cmp_op_on_partial_ord)]
pub mod commands;
pub mod config;
pub mod fd;
pub mod plant;

use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

pub use config::{LawKind, RunConfig, SystemKind};

#[derive(Debug, Parser)]
#[command(name = "cbc", version, about = "Control-based continuation experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,

    /// TOML run configuration; missing keys take their defaults.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Also write the full (t, y, mu, u) trajectory.
    #[arg(long, global = true)]
    pub log_trajectory: bool,
    #[arg(long, global = true, value_enum)]
    pub system: Option<SystemKind>,
    #[arg(long, global = true, value_enum)]
    pub law: Option<LawKind>,
    /// Run this many consecutive seeds in parallel, each into `OUT/seed_N`.
    #[arg(long, global = true, default_value_t = 1)]
    pub jobs: usize,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Quasi-static up- and down-sweep with the control off.
    Sweep,
    /// Continuation of one branch under feedback.
    Cbc,
    /// Stabilize a single point at fixed references.
    Stabilize,
    /// Controllability verdicts from a finite-difference linearization.
    Check {
        #[arg(long, allow_hyphen_values = true)]
        mu: Option<f64>,
        /// State, comma separated.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        x: Option<Vec<f64>>,
    },
}

impl Cli {
    /// Config file plus command-line overrides.
    pub fn resolve(&self) -> anyhow::Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(out) = &self.out {
            cfg.out.clone_from(out);
        }
        if self.log_trajectory {
            cfg.log_trajectory = true;
        }
        if let Some(system) = self.system {
            cfg.system = system;
        }
        if let Some(law) = self.law {
            cfg.law = law;
        }
        if let Command::Check { mu, x } = &self.command {
            if let Some(mu) = mu {
                cfg.check.mu = *mu;
            }
            if let Some(x) = x {
                cfg.check.x.clone_from(x);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Runs one command for one configuration, printing what it produced.
pub fn run_one(command: &Command, cfg: &RunConfig) -> anyhow::Result<()> {
    match command {
        Command::Sweep => report(cfg, commands::cmd_sweep(cfg)?),
        Command::Cbc => report(cfg, commands::cmd_cbc(cfg)?),
        Command::Stabilize => report(cfg, commands::cmd_stabilize(cfg)?),
        Command::Check { .. } => print!("{}", commands::cmd_check(cfg)?),
    }
    Ok(())
}

fn report(cfg: &RunConfig, files: Vec<String>) {
    for f in files {
        println!("{}", cfg.out.join(f).display());
    }
}

/// Runs `jobs` consecutive seeds on separate threads.
pub fn run_jobs(command: &Command, cfg: &RunConfig, jobs: usize) -> anyhow::Result<()> {
    if jobs <= 1 {
        return run_one(command, cfg);
    }
    let configs: Vec<RunConfig> = (0..jobs as u64)
        .map(|k| {
            let mut c = cfg.clone();
            c.seed = cfg.seed + k;
            c.out = cfg.out.join(format!("seed_{}", c.seed));
            c
        })
        .collect();
    std::thread::scope(|scope| {
        let handles: Vec<_> = configs
            .iter()
            .map(|c| scope.spawn(move || run_one(command, c).with_context(|| format!("seed {}", c.seed))))
            .collect();
        handles
            .into_iter()
            .map(|h| h.join().expect("worker panicked"))
            .collect::<anyhow::Result<Vec<()>>>()
    })?;
    Ok(())
}
