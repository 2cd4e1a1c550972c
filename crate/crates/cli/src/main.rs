use anyhow::Result;
use clap::{Args, Parser, Subcommand};
use fbcast::commands::{self, Algo};
use fbcast::config::{ExperimentConfig, Preset};
use std::path::PathBuf;

/// Simulator and trainer for latency-aware cache-aided multicast
/// streaming policies.
#[derive(Parser)]
#[command(name = "fbcast", version)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Args)]
struct Common {
    /// Flat key = value configuration file applied over the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Base parameter set: 'paper' (full scale) or 'tiny' (desk scale).
    #[arg(long, default_value = "paper")]
    preset: String,
    /// Global seed override.
    #[arg(long)]
    seed: Option<u64>,
    /// Training episode count override.
    #[arg(long)]
    episodes: Option<u64>,
    /// Output directory (falls back to $FBCAST_OUT, then ./runs).
    #[arg(long)]
    out: Option<PathBuf>,
}

impl Common {
    fn resolve(&self) -> Result<(ExperimentConfig, PathBuf)> {
        let mut cfg = ExperimentConfig::preset(Preset::parse(&self.preset)?);
        if let Some(path) = &self.config {
            cfg.apply_file(path)?;
        }
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(eps) = self.episodes {
            cfg.episodes = eps;
        }
        let out = self
            .out
            .clone()
            .or_else(|| std::env::var_os("FBCAST_OUT").map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("runs"));
        Ok((cfg, out))
    }
}

#[derive(Subcommand)]
enum Cmd {
    /// Train a policy and write its episode CSV and checkpoint.
    Train {
        /// Learner: 'fb', 'a2c' or 'ppo'.
        #[arg(long, default_value = "fb")]
        algo: String,
        #[command(flatten)]
        common: Common,
    },
    /// Roll out a checkpointed policy and write the trajectory CSV.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Train all learned policies, evaluate them with the rule-based and
    /// unicast baselines, and write comparison/dominance tables.
    Compare {
        #[command(flatten)]
        common: Common,
    },
    /// Check the analytic outage formula against Monte-Carlo sampling.
    ValidateOutage {
        #[command(flatten)]
        common: Common,
    },
    /// Run the fast invariant suite.
    Selftest {
        #[command(flatten)]
        common: Common,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.cmd {
        Cmd::Train { algo, common } => {
            let (cfg, out) = common.resolve()?;
            let algo = Algo::parse(&algo)?;
            let stats = commands::train(&cfg, algo, &out)?;
            if let Some(last) = stats.last() {
                println!(
                    "trained {} for {} episodes; final scalarized return {}",
                    algo.name(),
                    stats.len(),
                    last.scalarized_return
                );
            }
        }
        Cmd::Eval { checkpoint, common } => {
            let (cfg, out) = common.resolve()?;
            commands::eval(&cfg, &checkpoint, &out)?;
            println!("wrote {}", out.join("trajectory.csv").display());
        }
        Cmd::Compare { common } => {
            let (cfg, out) = common.resolve()?;
            let outcome = commands::compare(&cfg, &out)?;
            for (name, cost) in outcome.names.iter().zip(&outcome.costs) {
                println!(
                    "{name}: qos={} bw={} lat={}",
                    cost[0], cost[1], cost[2]
                );
            }
        }
        Cmd::ValidateOutage { common } => {
            let (cfg, out) = common.resolve()?;
            let points = commands::validate_outage(cfg.seed, &out)?;
            println!("outage validation passed on {} grid points", points.len());
        }
        Cmd::Selftest { common } => {
            let (cfg, _) = common.resolve()?;
            for line in commands::selftest(&cfg)? {
                println!("{line}");
            }
        }
    }
    Ok(())
}

fn main() {
    let cli = Cli::parse();
    if let Err(e) = run(cli) {
        // One line, machine-parseable: "error: <context>: <cause>".
        eprintln!("error: {:#}", e);
        std::process::exit(1);
    }
}
