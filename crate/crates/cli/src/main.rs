//! `chargecast` — the occupancy-forecasting workflow as one binary.
//!
//! Stages write their artifacts to disk so each can be rerun on its own:
//!
//! ```text
//! chargecast generate --out dataset.csv
//! chargecast train    --dataset dataset.csv --out model.bin
//! chargecast run      --dataset dataset.csv --year 2018 --model model.bin --out forecasts.csv
//! chargecast evaluate --forecasts forecasts.csv --out report.csv
//! chargecast replay-serve --dataset dataset.csv --year 2018 --addr 127.0.0.1:7878
//! ```
//!
//! Exit codes: 0 success, 1 runtime failure, 2 invalid input or config.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

mod commands;
mod manifest;

use commands::{
    cmd_evaluate, cmd_generate, cmd_replay_serve, cmd_run, cmd_train, EvaluateArgs, GenerateArgs,
    ReplayServeArgs, RunArgs, TrainArgs, CONFIG_ENV,
};

/// Errors split by exit code: invalid input/config exits 2, runtime
/// failures exit 1.
#[derive(Debug)]
pub enum CliError {
    Invalid(String),
    Runtime(String),
}

pub type Result<T> = std::result::Result<T, CliError>;

#[derive(Parser)]
#[command(
    name = "chargecast",
    version,
    about = "Streaming occupancy forecasting for an EV charging station",
    long_about = None,
    after_help = format!("Set {CONFIG_ENV} to point at a default generator config file.")
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic charge-session dataset (CSV).
    Generate(GenerateCli),
    /// Batch-train the logistic regression on one dataset year.
    Train(TrainCli),
    /// Replay a test year through the broker and run the forecasting loop.
    Run(RunCli),
    /// Score a forecast ledger over a threshold grid.
    Evaluate(EvaluateCli),
    /// Serve a labeled minute stream as newline-delimited JSON over TCP.
    ReplayServe(ReplayServeCli),
}

#[derive(Args)]
struct GenerateCli {
    /// Generator config file (flat key = value); defaults to $CHARGECAST_CONFIG, then built-ins.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output dataset CSV path.
    #[arg(long, default_value = "dataset.csv")]
    out: PathBuf,
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Override the config years (comma-separated).
    #[arg(long, value_delimiter = ',')]
    years: Option<Vec<i32>>,
    /// Override the expected unshifted sessions per year.
    #[arg(long)]
    yearly_sessions: Option<u32>,
    /// Add an arrival-intensity shift, e.g. '2018-06-01..2018-07-26 x4'. Repeatable.
    #[arg(long = "shift")]
    shifts: Vec<String>,
}

#[derive(Args)]
struct TrainCli {
    /// Dataset CSV produced by `generate`.
    #[arg(long)]
    dataset: PathBuf,
    /// Training year; defaults to the year with the most sessions.
    #[arg(long)]
    year: Option<i32>,
    /// Full-batch gradient-descent epochs.
    #[arg(long, default_value_t = 500)]
    epochs: u32,
    /// Gradient-descent step size (also used by streaming updates).
    #[arg(long, default_value_t = 0.5)]
    learning_rate: f64,
    /// L2 strength on the weights (bias unregularized).
    #[arg(long, default_value_t = 1e-4)]
    l2: f64,
    /// Shuffle seed, reserved for stochastic trainers.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Festivity calendar file: one ISO date per line, '#' comments.
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// Output model file.
    #[arg(long, default_value = "model.bin")]
    out: PathBuf,
}

#[derive(Args)]
struct RunCli {
    /// Dataset CSV (not needed with --tcp).
    #[arg(long, required_unless_present = "tcp")]
    dataset: Option<PathBuf>,
    /// Test year to replay, endpoint-inclusive (not needed with --tcp).
    #[arg(long, required_unless_present = "tcp")]
    year: Option<i32>,
    /// Batch-trained model file from `train`.
    #[arg(long)]
    model: PathBuf,
    /// Forecast ledger CSV output.
    #[arg(long, default_value = "forecasts.csv")]
    out: PathBuf,
    /// Optional line-protocol sink for time-series dashboards.
    #[arg(long)]
    lp_out: Option<PathBuf>,
    /// Forecast horizon H in minutes.
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u32).range(1..))]
    horizon: u32,
    /// Streaming update window W in samples.
    #[arg(long, default_value_t = 15, value_parser = clap::value_parser!(u32).range(1..))]
    window: u32,
    /// Freeze the streaming model (no incremental updates).
    #[arg(long)]
    no_update: bool,
    /// Replay pacing: a real-time multiplier, or 'max' for unthrottled.
    #[arg(long, default_value = "max")]
    speedup: String,
    /// Festivity calendar file.
    #[arg(long)]
    calendar: Option<PathBuf>,
    /// Broker topic name.
    #[arg(long, default_value = "occupancy")]
    topic: String,
    /// Consume the event stream from a replay-serve address instead of the
    /// in-process replay.
    #[arg(long)]
    tcp: Option<String>,
}

#[derive(Args)]
struct EvaluateCli {
    /// Forecast ledger CSV from `run`.
    #[arg(long)]
    forecasts: PathBuf,
    /// Report CSV output.
    #[arg(long, default_value = "report.csv")]
    out: PathBuf,
    /// Prefix for PR-curve exports (<prefix>-streaming.csv, <prefix>-batch.csv).
    #[arg(long)]
    pr_out: Option<PathBuf>,
    /// Threshold grid (comma-separated).
    #[arg(long, value_delimiter = ',', default_values_t = [0.30, 0.35, 0.40, 0.45, 0.50])]
    thresholds: Vec<f64>,
}

#[derive(Args)]
struct ReplayServeCli {
    /// Dataset CSV to label-expand and serve.
    #[arg(long)]
    dataset: PathBuf,
    /// Year to serve, endpoint-inclusive.
    #[arg(long)]
    year: Option<i32>,
    /// Start of an explicit half-open minute range (YYYY-MM-DDTHH:MM).
    #[arg(long, requires = "to", conflicts_with = "year")]
    from: Option<String>,
    /// End of the half-open minute range.
    #[arg(long, requires = "from", conflicts_with = "year")]
    to: Option<String>,
    /// Listen address; port 0 picks an ephemeral port (printed on start).
    #[arg(long, default_value = "127.0.0.1:7878")]
    addr: String,
    /// Pacing: real-time multiplier or 'max'.
    #[arg(long, default_value = "max")]
    speedup: String,
    /// Topic name (informational).
    #[arg(long, default_value = "occupancy")]
    topic: String,
    /// Serve this many connections, then exit.
    #[arg(long)]
    max_conns: Option<usize>,
}

fn dispatch(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Generate(a) => cmd_generate(GenerateArgs {
            config: a.config,
            out: a.out,
            seed: a.seed,
            years: a.years,
            yearly_sessions: a.yearly_sessions,
            shifts: a.shifts,
        }),
        Command::Train(a) => cmd_train(TrainArgs {
            dataset: a.dataset,
            year: a.year,
            epochs: a.epochs,
            learning_rate: a.learning_rate,
            l2: a.l2,
            seed: a.seed,
            calendar: a.calendar,
            out: a.out,
        }),
        Command::Run(a) => cmd_run(RunArgs {
            dataset: a.dataset,
            year: a.year,
            model: a.model,
            out: a.out,
            lp_out: a.lp_out,
            horizon: a.horizon,
            window: a.window,
            no_update: a.no_update,
            speedup: a.speedup,
            calendar: a.calendar,
            topic: a.topic,
            tcp: a.tcp,
        }),
        Command::Evaluate(a) => cmd_evaluate(EvaluateArgs {
            forecasts: a.forecasts,
            out: a.out,
            pr_out: a.pr_out,
            thresholds: a.thresholds,
        }),
        Command::ReplayServe(a) => cmd_replay_serve(ReplayServeArgs {
            dataset: a.dataset,
            year: a.year,
            from: a.from,
            to: a.to,
            addr: a.addr,
            speedup: a.speedup,
            topic: a.topic,
            max_conns: a.max_conns,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(CliError::Invalid(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(2)
        }
        Err(CliError::Runtime(message)) => {
            eprintln!("error: {message}");
            ExitCode::from(1)
        }
    }
}
