//! `ladderprobe`: runs the ladder dynamics, trial-state correlators, probe
//! readout and correlation extraction from a TOML experiment description.
//!
//! Exit codes: 0 success, 1 usage or config error, 2 convergence or rank
//! failure, 3 probe regime violation.

mod commands;
mod config;
mod units;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use ladderprobe_core::Error as CoreError;

use crate::config::ConfigError;

#[derive(Parser, Debug)]
#[command(name = "ladderprobe", version, about = "LC-ladder impurity simulator with Josephson probe readout")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug, Clone)]
pub struct GlobalArgs {
    /// Experiment config (TOML); applied after any presets.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Built-in parameter set; repeatable, applied in order.
    #[arg(long, global = true, value_name = "NAME")]
    pub preset: Vec<String>,
    /// Seed for random phases and measurement noise; overrides `run.seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Directory for output files.
    #[arg(long, global = true, default_value = "out")]
    pub out_dir: PathBuf,
    /// Format of report files.
    #[arg(long, global = true, value_enum, default_value_t = Format::Text)]
    pub format: Format,
}

#[derive(ValueEnum, Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    Text,
    Json,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Integrate the rate equations and solve for the steady state.
    Dynamics,
    /// Write correlators for the coherent, Fock and squeezed trial states.
    Correlations,
    /// Simulate the probe readout for test tones or a trial state.
    Probe,
    /// Choose the site pairs needed to resolve every degeneracy group.
    Plan,
    /// Recover N and A correlators from probe measurements.
    Extract(commands::ExtractArgs),
    /// Tabulate the squeezing measure of correlation files.
    Report(commands::ReportArgs),
    /// Print the names of the built-in presets.
    Presets,
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.downcast_ref::<ConfigError>().is_some() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<CoreError>() {
            return match e {
                CoreError::NotConverged { .. }
                | CoreError::StepUnderflow { .. }
                | CoreError::RankDeficient(_) => 2,
                CoreError::Regime(_) | CoreError::Undersampled { .. } | CoreError::CouplerPole { .. } => 3,
                _ => 1,
            };
        }
    }
    1
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let result = match &cli.command {
        Command::Dynamics => commands::dynamics(&cli.global),
        Command::Correlations => commands::correlations(&cli.global),
        Command::Probe => commands::probe(&cli.global),
        Command::Plan => commands::plan(&cli.global),
        Command::Extract(args) => commands::extract(&cli.global, args),
        Command::Report(args) => commands::report(&cli.global, args),
        Command::Presets => {
            for (name, _) in config::PRESETS {
                println!("{name}");
            }
            Ok(())
        }
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code(&e))
        }
    }
}
