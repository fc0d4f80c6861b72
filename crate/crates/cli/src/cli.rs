//! Command-line surface.

use std::path::PathBuf;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use crate::distill::{distill, DistillOptions};
use crate::envgen::{gen_env, GenEnvOptions};
use crate::fit::{fit_file, fits_csv};
use crate::report::write_report;
use crate::run::{run, RunOptions};
use crate::write_atomic;

/// Bandit exploration experiments.
///
/// Exit status: 0 on success, 2 when the config, flags or inputs are
/// invalid, 3 when a command stops with outputs missing or incomplete.
#[derive(Debug, Parser)]
#[command(name = "explore", version)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run every agent on every task of a config, then write the report.
    Run(RunArgs),
    /// Export oracle demonstration datasets.
    Distill(DistillArgs),
    /// Rebuild the report of a run directory.
    Report {
        /// Directory written by `explore run`.
        run_dir: PathBuf,
    },
    /// Fit the regret model to curves from a CSV file.
    Fit(FitArgs),
    /// Write the configured tasks as JSON.
    GenEnv(GenEnvArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory; overrides `out` in the config.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Parallel trials; defaults to the number of CPUs.
    #[arg(long)]
    pub workers: Option<usize>,
    /// Continue partial trial logs left by an interrupted run.
    #[arg(long)]
    pub resume: bool,
    /// Root seed; overrides `seed` in the config.
    #[arg(long)]
    pub seed: Option<u64>,
    /// Permit agents with live HTTP backends.
    #[arg(long)]
    pub allow_network: bool,
}

#[derive(Debug, Args)]
pub struct DistillArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub workers: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    /// `regret.csv` from a report, or one regret value per row.
    pub input: PathBuf,
    /// Gap between the best and second-best arm.
    #[arg(long)]
    pub delta_min: Option<f64>,
    /// Write the fit table here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GenEnvArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Runs one parsed command line.
pub fn execute(cli: Cli) -> anyhow::Result<()> {
    match cli.command {
        Command::Run(a) => {
            let summary = run(&RunOptions {
                config: a.config,
                out: a.out,
                workers: a.workers,
                resume: a.resume,
                seed: a.seed,
                allow_network: a.allow_network,
            })?;
            println!(
                "run {}: {} trials run, {} already complete; report in {}",
                summary.fingerprint,
                summary.executed,
                summary.reused,
                summary.out.join(crate::report::REPORT_DIR).display()
            );
        }
        Command::Distill(a) => {
            let out_flag = a.out.clone();
            let index = distill(&DistillOptions {
                config: a.config,
                out: a.out,
                workers: a.workers,
                seed: a.seed,
            })?;
            for m in &index.datasets {
                println!("{}: {} records from {} trajectories", m.name, m.records, m.trajectories);
            }
            if let Some(out) = out_flag {
                println!("datasets in {}", out.display());
            }
        }
        Command::Report { run_dir } => {
            let summary = write_report(&run_dir)?;
            println!("report in {}", summary.dir.display());
        }
        Command::Fit(a) => {
            let outcome = fit_file(&a.input, a.delta_min)?;
            for (config, agent) in &outcome.skipped {
                eprintln!("skipped {config}/{agent}: no delta_min");
            }
            let text = fits_csv(&outcome.fits)?;
            match a.out {
                Some(path) => write_atomic(&path, text.as_bytes()).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
        }
        Command::GenEnv(a) => {
            let index = gen_env(&GenEnvOptions {
                config: a.config,
                out: a.out,
                seed: a.seed,
            })?;
            for e in &index.envs {
                println!("{} ({} arms, horizon {})", e.label, e.num_arms, e.horizon);
            }
        }
    }
    Ok(())
}
