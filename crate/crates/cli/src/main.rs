//! `kinwave`: run the two-class traffic solvers from scenario files.

use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Context;
use clap::{Parser, Subcommand, ValueEnum};

use kinwave_core::harness::{self, SolverKind, EXPERIMENT_NAMES};
use kinwave_core::scenario::{parse_scenario, validate_scenario};
use kinwave_core::ClassId;

#[derive(Parser)]
#[command(name = "kinwave", about = "Two-class kinematic wave traffic solvers")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Euler,
    Lag1,
    Lag2,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Euler => SolverKind::Euler,
            SolverArg::Lag1 => SolverKind::Lag1,
            SolverArg::Lag2 => SolverKind::Lag2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum RefClassArg {
    Ptw,
    Car,
}

impl From<RefClassArg> for ClassId {
    fn from(r: RefClassArg) -> Self {
        match r {
            RefClassArg::Ptw => ClassId::Ptw,
            RefClassArg::Car => ClassId::Car,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one solver on a scenario file, writing CSV output.
    Run {
        scenario: PathBuf,
        #[arg(long, value_enum)]
        solver: SolverArg,
        /// Carrier class for the lag2 solver (ignored otherwise).
        #[arg(long, value_enum, default_value = "ptw")]
        ref_class: RefClassArg,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run a named comparison experiment.
    Experiment {
        /// One of: fig6_euler_vs_lag2, fig7_lag_methods, fig8_swapped_speeds,
        /// fig9_trajectories, refinement_study.
        name: String,
        #[arg(long)]
        out: PathBuf,
    },
    /// Validate a scenario file without running it.
    Validate { scenario: PathBuf },
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    match cli.command {
        Command::Run { scenario, solver, ref_class, out } => {
            let text = std::fs::read_to_string(&scenario)
                .with_context(|| format!("reading {}", scenario.display()))?;
            let cfg = parse_scenario(&text)?;
            harness::run_scenario(&cfg, solver.into(), ref_class.into(), &out)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Experiment { name, out } => {
            if !EXPERIMENT_NAMES.contains(&name.as_str()) {
                anyhow::bail!(
                    "unknown experiment `{name}`; expected one of {}",
                    EXPERIMENT_NAMES.join(", ")
                );
            }
            harness::run_experiment(&name, &out)?;
            println!("wrote {}", out.display());
            Ok(true)
        }
        Command::Validate { scenario } => {
            let text = std::fs::read_to_string(&scenario)
                .with_context(|| format!("reading {}", scenario.display()))?;
            let cfg = parse_scenario(&text)?;
            let report = validate_scenario(&cfg);
            println!("{report}");
            Ok(report.is_pass())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
