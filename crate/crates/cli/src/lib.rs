//! Command-line driver for the dbar extension library: configuration,
//! presets, snapshots and the `extend`, `verify`, `sweep` and `show`
//! subcommands.

pub mod commands;
pub mod config;
pub mod error;
pub mod presets;
pub mod snapshot;

use std::path::PathBuf;

use clap::{Parser, Subcommand};

pub use config::ExperimentConfig;
pub use error::CliError;

pub const THREADS_ENV: &str = "DBAR_THREADS";

#[derive(Debug, Parser)]
#[command(name = "dbar-ext", version, about = "Extension of dbar-closed forms from a hyperplane slice")]
pub struct Cli {
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub preset: Option<String>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the extension and write report, summary and snapshots.
    Extend,
    /// Run the selected verifiers.
    Verify,
    /// Run every sweep point and write a long-format CSV.
    Sweep,
    /// Print a snapshot, report or config; without a path, the resolved config.
    Show { path: Option<PathBuf> },
}

impl Cli {
    pub fn load_config(&self) -> Result<ExperimentConfig, CliError> {
        let mut cfg = match (&self.config, &self.preset) {
            (Some(_), Some(_)) => return Err(CliError::Config("give --config or --preset, not both".into())),
            (Some(p), None) => ExperimentConfig::load(p)?,
            (None, Some(name)) => presets::preset(name).ok_or_else(|| {
                CliError::Config(format!("unknown preset {name:?}; known: {:?}", presets::PRESETS))
            })?,
            (None, None) => return Err(CliError::Config("need --config or --preset".into())),
        };
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        Ok(cfg)
    }

    /// `--threads`, then the environment, then the config, then one.
    pub fn threads(&self, cfg: &ExperimentConfig) -> Result<usize, CliError> {
        if let Some(t) = self.threads {
            return Ok(t.max(1));
        }
        if let Ok(v) = std::env::var(THREADS_ENV) {
            return v
                .trim()
                .parse::<usize>()
                .map(|t| t.max(1))
                .map_err(|_| CliError::Config(format!("{THREADS_ENV}={v:?} is not a count")));
        }
        Ok(cfg.threads.unwrap_or(1).max(1))
    }

    pub fn out_dir(&self, cfg: &ExperimentConfig) -> PathBuf {
        self.out
            .clone()
            .or_else(|| cfg.output.as_ref().map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from("out"))
    }
}

pub fn run(cli: &Cli) -> Result<(), CliError> {
    faer::set_global_parallelism(faer::Par::Seq);
    if let Command::Show { path: Some(p) } = &cli.command {
        print!("{}", commands::show_path(p)?);
        return Ok(());
    }
    let cfg = cli.load_config()?;
    match &cli.command {
        Command::Extend => {
            let out = cli.out_dir(&cfg);
            let run = commands::cmd_extend(&cfg, &out)?;
            for d in &run.report.records {
                println!(
                    "delta {:.6}: |f_delta| {:.6e} trace error {:.3e} c {:.6} iterations {}",
                    d.delta, d.norm_f_delta, d.trace_error, d.c_empirical, d.iterations
                );
            }
            println!("wrote {}", out.display());
        }
        Command::Verify => {
            commands::cmd_verify(&cfg, &cli.out_dir(&cfg), cfg.seed)?;
        }
        Command::Sweep => {
            cfg.validate()?;
            let path = commands::cmd_sweep(&cfg, &cli.out_dir(&cfg), cli.threads(&cfg)?)?;
            println!("wrote {}", path.display());
        }
        Command::Show { .. } => print!("{}", cfg.to_toml()?),
    }
    Ok(())
}
