//! Batch front-end for the spin-to-charge-conversion toolkit. One command
//! per process: parse a JSON config, run the requested simulation or fit,
//! write tables atomically, and print a one-line JSON summary.
//!
//! Exit codes: 0 success, 1 configuration problem, 2 runtime failure.

mod commands;
mod config;
mod error;
mod output;

use std::path::PathBuf;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};
use serde_json::json;

use crate::commands::CommandReport;
use crate::error::{runtime, validation, CliResult};
use crate::output::OutDir;

#[derive(Parser)]
#[command(name = "nvscc", version, about = "NV spin-to-charge-conversion readout toolkit")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: PathBuf,
    /// Override the config's master_seed (ignored by deterministic commands).
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for output files; created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Simulate a binned fluorescence trace of a blinking charge state.
    SimulateTrace(CommonArgs),
    /// Fit switching and emission rates to a trace CSV.
    FitRates(CommonArgs),
    /// Simulate spin-to-charge-conversion shots for one spin preparation.
    SimulateScc(CommonArgs),
    /// Estimate spin readout errors from a two-class shot ensemble.
    ReadoutErrors(CommonArgs),
    /// Tabulate AC sensitivity over an interrogation-time grid.
    SensitivityScan(CommonArgs),
    /// Tabulate readout noise and sensitivity over a readout-window grid.
    ReadoutTimeScan(CommonArgs),
    /// Scan the verification-window acceptance threshold.
    PostselectScan(CommonArgs),
    /// Single-shot field uncertainty for a given noise factor.
    SingleShot(CommonArgs),
    /// Fit a stretched-exponential envelope to contrast samples.
    FitDecoherence(CommonArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::SimulateTrace(_) => "simulate-trace",
            Command::FitRates(_) => "fit-rates",
            Command::SimulateScc(_) => "simulate-scc",
            Command::ReadoutErrors(_) => "readout-errors",
            Command::SensitivityScan(_) => "sensitivity-scan",
            Command::ReadoutTimeScan(_) => "readout-time-scan",
            Command::PostselectScan(_) => "postselect-scan",
            Command::SingleShot(_) => "single-shot",
            Command::FitDecoherence(_) => "fit-decoherence",
        }
    }

    fn args(&self) -> &CommonArgs {
        match self {
            Command::SimulateTrace(args)
            | Command::FitRates(args)
            | Command::SimulateScc(args)
            | Command::ReadoutErrors(args)
            | Command::SensitivityScan(args)
            | Command::ReadoutTimeScan(args)
            | Command::PostselectScan(args)
            | Command::SingleShot(args)
            | Command::FitDecoherence(args) => args,
        }
    }
}

/// NV_SCC_THREADS caps the rayon pool; unset means rayon's default.
fn configure_threads() -> CliResult<()> {
    let Some(raw) = std::env::var_os("NV_SCC_THREADS") else {
        return Ok(());
    };
    let threads = raw
        .to_str()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n >= 1)
        .ok_or_else(|| validation(format!("NV_SCC_THREADS: expected a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(runtime)
}

fn dispatch(command: &Command) -> CliResult<CommandReport> {
    let args = command.args();
    let out = OutDir::create(&args.out)?;
    let path = args.config.as_path();
    match command {
        Command::SimulateTrace(_) => {
            commands::simulate_trace_cmd(&config::load(path)?, args.seed, &out)
        }
        Command::FitRates(_) => commands::fit_rates_cmd(&config::load(path)?, &out),
        Command::SimulateScc(_) => {
            commands::simulate_scc_cmd(&config::load(path)?, args.seed, &out)
        }
        Command::ReadoutErrors(_) => {
            commands::readout_errors_cmd(&config::load(path)?, args.seed, &out)
        }
        Command::SensitivityScan(_) => commands::sensitivity_scan_cmd(&config::load(path)?, &out),
        Command::ReadoutTimeScan(_) => commands::readout_time_scan_cmd(&config::load(path)?, &out),
        Command::PostselectScan(_) => {
            commands::postselect_scan_cmd(&config::load(path)?, args.seed, &out)
        }
        Command::SingleShot(_) => commands::single_shot_cmd(&config::load(path)?, &out),
        Command::FitDecoherence(_) => commands::fit_decoherence_cmd(&config::load(path)?, &out),
    }
}

fn main() {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            use clap::error::ErrorKind;
            let code = match err.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = err.print();
            std::process::exit(code);
        }
    };

    let started = Instant::now();
    let result = configure_threads().and_then(|()| dispatch(&cli.command));
    match result {
        Ok(report) => {
            let outputs: Vec<String> =
                report.outputs.iter().map(|p| p.display().to_string()).collect();
            let summary = json!({
                "command": cli.command.name(),
                "seed": report.seed,
                "outputs": outputs,
                "wall_ms": started.elapsed().as_millis() as u64,
            });
            println!("{summary}");
        }
        Err(err) => {
            eprintln!("error: {err}");
            std::process::exit(err.exit_code());
        }
    }
}
