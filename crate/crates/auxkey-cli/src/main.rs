//! `auxkey` — command-line front end for the simulator. Four subcommands
//! (`analytic`, `simulate`, `resilience`, `audit`), each a pure function of
//! (config, seed) to a directory of output files plus a run manifest.

mod commands;
mod config;
mod output;

use auxkey_core::{Boundary, SimConfig};
use clap::{Args, Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(#[from] config::ConfigError),
    #[error("{0}")]
    Netsim(#[from] auxkey_core::netsim::NetsimError),
    #[error("{0}")]
    Analysis(#[from] auxkey_core::analysis::AnalysisError),
    #[error("{0}")]
    Protocol(#[from] auxkey_core::protocol::ProtocolError),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Parser)]
#[command(
    name = "auxkey",
    version,
    about = "Simulator for auxiliary-node-assisted pairwise key establishment"
)]
struct Cli {
    #[command(subcommand)]
    cmd: Cmd,
}

/// Flags shared by every subcommand. Settings come from the config file
/// (built-in defaults when absent); --seed and --boundary override it.
#[derive(Args)]
struct Common {
    /// Scenario file: `key = value` lines, `#` comments
    #[arg(long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override the scenario seed
    #[arg(long)]
    seed: Option<u64>,
    /// Override the boundary model
    #[arg(long, value_name = "torus|bounded", value_parser = config::parse_boundary)]
    boundary: Option<Boundary>,
    /// Output directory, created if missing
    #[arg(long, value_name = "DIR")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Cmd {
    /// Closed-form connectivity curves over the standard grid
    Analytic(Common),
    /// Key-establishment rounds, optionally with wire transcripts
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Write one transcript file per trial
        #[arg(long)]
        transcript: bool,
    },
    /// Capture experiments against a completed run
    Resilience {
        #[command(flatten)]
        common: Common,
        /// Capture counts to evaluate (default: 50 100 … 500)
        #[arg(value_name = "C")]
        captures: Vec<u64>,
    },
    /// Storage and primitive-operation accounting
    Audit(Common),
}

impl Common {
    fn load(&self) -> Result<SimConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => config::load(path)?,
            None => SimConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        if let Some(boundary) = self.boundary {
            cfg.boundary = boundary;
        }
        Ok(cfg)
    }
}

fn run() -> Result<(), CliError> {
    let cli = Cli::parse();
    let (common, name): (&Common, &str) = match &cli.cmd {
        Cmd::Analytic(c) => (c, "analytic"),
        Cmd::Simulate { common, .. } => (common, "simulate"),
        Cmd::Resilience { common, .. } => (common, "resilience"),
        Cmd::Audit(c) => (c, "audit"),
    };
    let cfg = common.load()?;
    let mut writer = output::RunWriter::new(&common.out)?;
    match &cli.cmd {
        Cmd::Analytic(_) => commands::analytic(&cfg, &mut writer)?,
        Cmd::Simulate { transcript, .. } => commands::simulate(&cfg, *transcript, &mut writer)?,
        Cmd::Resilience { captures, .. } => {
            let captures = if captures.is_empty() {
                commands::default_captures()
            } else {
                captures.clone()
            };
            commands::resilience(&cfg, &captures, &mut writer)?
        }
        Cmd::Audit(_) => commands::audit(&cfg, &mut writer)?,
    }
    for file in writer.commit(name, &cfg)? {
        println!("wrote {}", common.out.join(file).display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match run() {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("auxkey: {e}");
            ExitCode::FAILURE
        }
    }
}
