//! Command-line front end: configuration, experiment orchestration and file
//! I/O. The only module with side effects.

pub mod config;
pub mod experiment;
pub mod io;
pub mod study;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Parser, Subcommand};

use crate::error::Result;
use crate::verify::EstimateReport;
pub use config::{parse_config, Config};
pub use experiment::{run_experiment, verify_dir};
pub use study::convergence_study;

#[derive(Debug, Parser)]
#[command(name = "coneflow", version, about = "Simulate and verify inverse curvature flow in convex cones")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Integrate one experiment, write its run directory and verify it.
    Run {
        config: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Re-verify an existing run directory.
    Verify { dir: PathBuf },
    /// Convergence study over several N_theta.
    Study {
        config: PathBuf,
        /// Comma-separated N_theta list, at least three.
        #[arg(long, value_delimiter = ',', required = true)]
        grids: Vec<usize>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, clap::Args)]
pub struct Common {
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// `section.key=value`, repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
    /// Reserved; runs are deterministic.
    #[arg(long)]
    pub seed: Option<u64>,
}

fn load(path: &PathBuf, common: &Common) -> Result<Config> {
    let mut cfg = parse_config(&std::fs::read_to_string(path)?, &common.overrides)?;
    if let Some(d) = &common.out_dir {
        cfg.output.out_dir = Some(d.clone());
    }
    Ok(cfg)
}

fn print_report(r: &EstimateReport) {
    for c in &r.checks {
        println!("{} {:<28} margin {:e}  {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.margin, c.details);
    }
    println!("termination: {}", r.meta.termination);
}

fn execute(cli: Cli) -> Result<i32> {
    match cli.command {
        Command::Run { config, common } => {
            let cfg = load(&config, &common)?;
            let out = run_experiment(&cfg)?;
            print_report(&out.report);
            println!("wrote {}", out.out_dir.display());
            Ok(out.exit_code())
        }
        Command::Verify { dir } => {
            let r = verify_dir(&dir)?;
            print_report(&r);
            Ok(if r.passed { 0 } else { 1 })
        }
        Command::Study { config, grids, common } => {
            let cfg = load(&config, &common)?;
            let dir = cfg.out_dir();
            let rows = convergence_study(&cfg, &grids, &dir)?;
            let mut bad = false;
            for r in &rows {
                println!("{:<22} {:>5} -> {:<5} order {:.3} ({})", r.quantity, r.n_coarse, r.n_fine, r.order, r.status.as_str());
                bad |= r.status == study::Status::OutOfRange;
            }
            println!("wrote {}", dir.join(study::ORDERS).display());
            Ok(if bad { 1 } else { 0 })
        }
    }
}

/// Parses `args` and runs the command; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            2
        }
    }
}
