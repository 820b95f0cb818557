//! `wpc`: command-line driver for the observe / reference / fuse / explore
//! loop. Observations persist in a file store between commands.
//!
//! Exit codes: 0 success, 2 parameter error, 3 missing data, 4 I/O error.

mod cmd;
mod error;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use wpc::Exec;

use output::{Ctx, Format};

#[derive(Debug, Parser)]
#[command(name = "wpc", version, about = "Multi-level workload characterization toolkit")]
struct Cli {
    /// Profile store directory.
    #[arg(long, global = true, default_value = "wpc-store")]
    store: PathBuf,
    /// Generator seed; also recorded in every report.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Omit the timestamp from reports so reruns are byte-identical.
    #[arg(long, global = true)]
    no_timestamp: bool,
    #[arg(long, global = true, value_enum, default_value_t = Format::Json)]
    format: Format,
    /// Run batch work on one thread.
    #[arg(long, global = true)]
    sequential: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a standard reference workload trace.
    GenRef(cmd::gen::GenRefArgs),
    /// Measure trace-level locality and store the observations.
    Analyze(cmd::observe::AnalyzeArgs),
    /// Simulate a trace (or ingest counters) and store UARCH observations.
    Simulate(cmd::observe::SimulateArgs),
    /// Sweep a reference workload over X and report the working-set knee.
    Sweep(cmd::explore::SweepArgs),
    /// Choose X for a reference workload from a candidate grid.
    Calibrate(cmd::explore::CalibrateArgs),
    /// Normalized impact factors of a workload against a reference.
    Fuse(cmd::fusion::FuseArgs),
    /// Component breakdown tree below the impact factors.
    Breakdown(cmd::fusion::BreakdownArgs),
    /// Pearson correlation of one locality family across two levels.
    Correlate(cmd::fusion::CorrelateArgs),
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let command = match &cli.command {
        Command::GenRef(_) => "gen-ref",
        Command::Analyze(_) => "analyze",
        Command::Simulate(_) => "simulate",
        Command::Sweep(_) => "sweep",
        Command::Calibrate(_) => "calibrate",
        Command::Fuse(_) => "fuse",
        Command::Breakdown(_) => "breakdown",
        Command::Correlate(_) => "correlate",
    };
    let ctx = Ctx {
        command,
        store_dir: cli.store,
        seed: cli.seed,
        timestamp: !cli.no_timestamp,
        format: cli.format,
        exec: if cli.sequential {
            Exec::Sequential
        } else {
            Exec::Parallel
        },
    };
    let result = match cli.command {
        Command::GenRef(a) => cmd::gen::run(&ctx, a),
        Command::Analyze(a) => cmd::observe::analyze(&ctx, a),
        Command::Simulate(a) => cmd::observe::simulate(&ctx, a),
        Command::Sweep(a) => cmd::explore::sweep(&ctx, a),
        Command::Calibrate(a) => cmd::explore::calibrate(&ctx, a),
        Command::Fuse(a) => cmd::fusion::fuse(&ctx, a),
        Command::Breakdown(a) => cmd::fusion::breakdown(&ctx, a),
        Command::Correlate(a) => cmd::fusion::correlate(&ctx, a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("wpc {command}: {e}");
            e.exit_code()
        }
    }
}
