use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Parser, Subcommand};
use dvrp_cli::checks::{self, CheckOptions, Fault};
use dvrp_cli::config::{self, grid_size, Partitioner};
use dvrp_cli::partition::{partition, PartitionOptions};
use dvrp_cli::runner::{run_experiment, RunOptions};

/// Dynamic vehicle routing experiments.
#[derive(Parser)]
#[command(name = "dvrp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (policy, load, seed) cell of an experiment config.
    Run {
        config: PathBuf,
        /// Validate and print the grid size without writing anything.
        #[arg(long)]
        dry_run: bool,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        jobs: Option<usize>,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run the verification suites.
    Check {
        /// Only suites whose name contains this text.
        #[arg(long)]
        filter: Option<String>,
        /// Write one JSON report per suite here.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Inject a known defect; the affected suite should fail.
        #[arg(long, value_enum, hide = true)]
        fault: Option<Fault>,
    },
    /// Partition a request history into vehicle regions.
    Partition {
        requests: PathBuf,
        #[arg(long, default_value_t = 6)]
        m: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, value_enum, default_value_t = Partitioner::KMeans)]
        partitioner: Partitioner,
        /// Config providing the environment; inferred from x,y otherwise.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Write the JSON here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::new().filter_or("DVRP_LOG", "info")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Run {
            config,
            dry_run,
            jobs,
            out,
        } => {
            let loaded = config::load(&config)?;
            loaded
                .validate()
                .with_context(|| format!("invalid config {}", config.display()))?;
            if dry_run {
                println!(
                    "{}: {} cells ({} policies x {} loads x {} seeds)",
                    loaded.config.name,
                    grid_size(&loaded.config),
                    loaded.config.policies.len(),
                    loaded.config.rho.len(),
                    loaded.config.seeds.len()
                );
                return Ok(ExitCode::SUCCESS);
            }
            let summary = run_experiment(&loaded, &RunOptions { jobs, out })?;
            println!(
                "{} cells ({} resumed) written to {}",
                summary.cells.len(),
                summary.resumed,
                summary.out_dir.display()
            );
            for (policy, ratio) in &summary.comparison.aggregate {
                println!("  {policy}: {ratio:.3} x {}", summary.comparison.reference);
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Check { filter, out, fault } => {
            let reports = checks::run_checks(&CheckOptions {
                filter,
                fault,
                out,
                ..CheckOptions::default()
            })?;
            let mut ok = true;
            for r in &reports {
                println!("{} {}: {}", if r.passed { "PASS" } else { "FAIL" }, r.name, r.summary);
                ok &= r.passed;
            }
            Ok(if ok { ExitCode::SUCCESS } else { ExitCode::FAILURE })
        }
        Command::Partition {
            requests,
            m,
            seed,
            partitioner,
            config,
            out,
        } => {
            let report = partition(&PartitionOptions {
                requests: &requests,
                m,
                seed,
                partitioner,
                config: config.as_deref(),
            })?;
            let text = serde_json::to_string_pretty(&report)? + "\n";
            match out {
                Some(path) => std::fs::write(&path, text).with_context(|| format!("writing {}", path.display()))?,
                None => print!("{text}"),
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
