//! Command implementations behind the CLI surface.

use std::fs;
use std::io::{BufWriter, Write};
use std::net::TcpListener;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::Arc;
use std::time::Instant;

use chargecast_core::datagen::{
    self, busiest_year, generate, parse_config, parse_dataset_csv, sessions_starting_in_year,
    write_config, write_dataset_csv, GeneratorConfig,
};
use chargecast_core::domain::{
    sessions_to_labels, CalendarContext, ChargeSession, MinuteInstant, MinuteRange,
    OccupancySample,
};
use chargecast_core::eval::{
    best_f1, compare, sweep, write_comparison_csv, write_pr_curve_csv, write_sweep_csv,
};
use chargecast_core::featurize::{encode, parse_festivity_calendar};
use chargecast_core::model::{fit_batch, LabeledMinute, ModelState, TrainConfig};
use chargecast_core::pipeline::{
    parse_forecast_csv, resolved_pairs, run, ConsumerEvents, CsvForecastSink, ForecastSink,
    LineProtocolSink, MultiSink, PipelineConfig, UpdateWindow,
};
use chargecast_core::stream::{connect_sample_stream, replay, serve_replay, Broker, Speedup};
use serde_json::json;

use crate::manifest::{sha256_hex, RunManifest};
use crate::{CliError, Result};

/// Environment variable naming the default generator config file.
pub const CONFIG_ENV: &str = "CHARGECAST_CONFIG";

fn invalid(message: impl std::fmt::Display) -> CliError {
    CliError::Invalid(message.to_string())
}

fn runtime(message: impl std::fmt::Display) -> CliError {
    CliError::Runtime(message.to_string())
}

fn read_input(path: &Path, what: &str) -> Result<String> {
    fs::read_to_string(path).map_err(|e| invalid(format!("cannot read {what} '{}': {e}", path.display())))
}

fn write_output(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| runtime(format!("cannot write '{}': {e}", path.display())))
}

fn load_sessions(path: &Path) -> Result<Vec<ChargeSession>> {
    parse_dataset_csv(&read_input(path, "dataset")?).map_err(invalid)
}

fn load_model(path: &Path) -> Result<ModelState> {
    let bytes =
        fs::read(path).map_err(|e| invalid(format!("cannot read model '{}': {e}", path.display())))?;
    ModelState::load(&bytes).map_err(invalid)
}

fn load_calendar(path: Option<&Path>) -> Result<CalendarContext> {
    match path {
        None => Ok(CalendarContext::empty()),
        Some(p) => parse_festivity_calendar(&read_input(p, "festivity calendar")?).map_err(invalid),
    }
}

fn encode_labels(labels: &[OccupancySample], cal: &CalendarContext) -> Vec<LabeledMinute> {
    labels
        .iter()
        .map(|s| (encode(&s.ts, cal), s.occupied))
        .collect()
}

/// Resolve the generator config: explicit flag, then the environment
/// variable, then the built-in calibrated defaults.
fn resolve_generator_config(config_path: Option<&Path>) -> Result<GeneratorConfig> {
    let from_env = std::env::var_os(CONFIG_ENV).map(PathBuf::from);
    let path = config_path.or(from_env.as_deref());
    match path {
        Some(p) => parse_config(&read_input(p, "generator config")?).map_err(invalid),
        None => Ok(datagen::default_config()),
    }
}

pub struct GenerateArgs {
    pub config: Option<PathBuf>,
    pub out: PathBuf,
    pub seed: Option<u64>,
    pub years: Option<Vec<i32>>,
    pub yearly_sessions: Option<u32>,
    pub shifts: Vec<String>,
}

pub fn cmd_generate(args: GenerateArgs) -> Result<()> {
    let started = Instant::now();
    let mut config = resolve_generator_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        config.seed = seed;
    }
    if let Some(years) = args.years {
        config.years = years;
    }
    if let Some(target) = args.yearly_sessions {
        config.yearly_sessions = target;
    }
    for raw in &args.shifts {
        let shift = datagen::parse_shift_value(raw)
            .ok_or_else(|| invalid(format!("cannot parse shift '{raw}' (expected 'FROM..TO xMULT')")))?;
        config = datagen::with_shift(&config, shift.from, shift.to, shift.multiplier)
            .map_err(invalid)?;
    }

    let dataset = generate(&config).map_err(invalid)?;
    let csv = write_dataset_csv(&dataset.sessions);
    write_output(&args.out, csv.as_bytes())?;

    let mut manifest = RunManifest::new(
        "generate",
        json!({
            "generator": write_config(&config),
            "config_fingerprint": dataset.fingerprint,
        }),
    );
    manifest.dataset_fingerprint = Some(sha256_hex(csv.as_bytes()));
    manifest.output_paths = vec![args.out.display().to_string()];
    manifest.count("sessions", dataset.sessions.len() as u64);
    manifest.wall_time_ms = started.elapsed().as_millis();
    let manifest_path = manifest.write_next_to(&args.out).map_err(runtime)?;

    println!(
        "generated {} sessions over years {:?} -> {} (manifest {})",
        dataset.sessions.len(),
        config.years,
        args.out.display(),
        manifest_path.display()
    );
    Ok(())
}

pub struct TrainArgs {
    pub dataset: PathBuf,
    pub year: Option<i32>,
    pub epochs: u32,
    pub learning_rate: f64,
    pub l2: f64,
    pub seed: u64,
    pub calendar: Option<PathBuf>,
    pub out: PathBuf,
}

pub fn cmd_train(args: TrainArgs) -> Result<()> {
    let started = Instant::now();
    let sessions = load_sessions(&args.dataset)?;
    let calendar = load_calendar(args.calendar.as_deref())?;

    let year = match args.year {
        Some(y) => y,
        None => busiest_year(&sessions)
            .ok_or_else(|| invalid("dataset holds no sessions; cannot pick a training year"))?,
    };
    if sessions_starting_in_year(&sessions, year).is_empty() {
        return Err(invalid(format!("no sessions start in training year {year}")));
    }

    let labels = sessions_to_labels(&sessions, &MinuteRange::calendar_year(year))
        .map_err(invalid)?;
    let examples = encode_labels(&labels, &calendar);
    let cfg = TrainConfig {
        epochs: args.epochs,
        learning_rate: args.learning_rate,
        l2: args.l2,
        shuffle_seed: args.seed,
    };
    let model = fit_batch(&examples, &cfg).map_err(runtime)?;
    write_output(&args.out, &model.save())?;

    let positives: u64 = labels.iter().map(|s| s.occupied as u64).sum();
    let mut manifest = RunManifest::new(
        "train",
        json!({
            "year": year,
            "epochs": cfg.epochs,
            "learning_rate": cfg.learning_rate,
            "l2": cfg.l2,
            "shuffle_seed": cfg.shuffle_seed,
            "calendar": args.calendar.as_ref().map(|p| p.display().to_string()),
        }),
    );
    manifest.dataset_fingerprint = Some(sha256_hex(
        fs::read(&args.dataset).map_err(runtime)?.as_slice(),
    ));
    manifest.model_paths = vec![args.out.display().to_string()];
    manifest.output_paths = vec![args.out.display().to_string()];
    manifest.count("training_minutes", labels.len() as u64);
    manifest.count("occupied_minutes", positives);
    manifest.wall_time_ms = started.elapsed().as_millis();
    let manifest_path = manifest.write_next_to(&args.out).map_err(runtime)?;

    println!(
        "trained on year {year}: {} minutes ({} occupied) -> {} (manifest {})",
        labels.len(),
        positives,
        args.out.display(),
        manifest_path.display()
    );
    Ok(())
}

pub struct RunArgs {
    pub dataset: Option<PathBuf>,
    pub year: Option<i32>,
    pub model: PathBuf,
    pub out: PathBuf,
    pub lp_out: Option<PathBuf>,
    pub horizon: u32,
    pub window: u32,
    pub no_update: bool,
    pub speedup: String,
    pub calendar: Option<PathBuf>,
    pub topic: String,
    pub tcp: Option<String>,
}

pub fn cmd_run(args: RunArgs) -> Result<()> {
    let started = Instant::now();
    let model = load_model(&args.model)?;
    let calendar = load_calendar(args.calendar.as_deref())?;
    let speedup = Speedup::parse(&args.speedup).map_err(invalid)?;

    let cfg = PipelineConfig {
        horizon_minutes: args.horizon,
        window: if args.no_update {
            UpdateWindow::Disabled
        } else {
            UpdateWindow::Samples(args.window)
        },
        initial_model: model,
        calendar,
        comparison: true,
    };

    let forecast_file = fs::File::create(&args.out)
        .map_err(|e| runtime(format!("cannot create '{}': {e}", args.out.display())))?;
    let mut csv_sink = CsvForecastSink::new(BufWriter::new(forecast_file));
    let mut lp_sink = match &args.lp_out {
        Some(path) => {
            let file = fs::File::create(path)
                .map_err(|e| runtime(format!("cannot create '{}': {e}", path.display())))?;
            Some(LineProtocolSink::new(BufWriter::new(file)))
        }
        None => None,
    };
    let mut sinks: Vec<&mut dyn ForecastSink> = vec![&mut csv_sink];
    if let Some(lp) = lp_sink.as_mut() {
        sinks.push(lp);
    }
    let mut sink = MultiSink::new(sinks);

    let mut manifest = RunManifest::new(
        "run",
        json!({
            "horizon": args.horizon,
            "window": if args.no_update { json!("disabled") } else { json!(args.window) },
            "speedup": args.speedup,
            "topic": args.topic,
            "source": args.tcp.clone().unwrap_or_else(|| "in-process replay".into()),
            "test_year": args.year,
        }),
    );
    manifest.model_paths = vec![args.model.display().to_string()];

    let report = match &args.tcp {
        Some(addr) => {
            let events = connect_sample_stream(addr.as_str())
                .map_err(|e| runtime(format!("cannot connect to '{addr}': {e}")))?;
            run(&cfg, events, &mut sink).map_err(runtime)?
        }
        None => {
            let dataset = args
                .dataset
                .as_deref()
                .ok_or_else(|| invalid("--dataset is required unless --tcp is given"))?;
            let year = args
                .year
                .ok_or_else(|| invalid("--year is required unless --tcp is given"))?;
            let sessions = load_sessions(dataset)?;
            if sessions.is_empty() {
                return Err(invalid("dataset holds no sessions"));
            }
            manifest.dataset_fingerprint =
                Some(sha256_hex(fs::read(dataset).map_err(runtime)?.as_slice()));
            let labels =
                sessions_to_labels(&sessions, &MinuteRange::year_endpoint_inclusive(year))
                    .map_err(invalid)?;

            let broker = Arc::new(Broker::new());
            broker.create_topic(&args.topic).map_err(runtime)?;
            let consumer = broker.subscribe(&args.topic).map_err(runtime)?;
            let done = Arc::new(AtomicBool::new(false));

            let producer = {
                let broker = Arc::clone(&broker);
                let topic = args.topic.clone();
                let done = Arc::clone(&done);
                std::thread::spawn(move || {
                    let outcome = replay(&broker, &topic, &labels, speedup);
                    done.store(true, Ordering::SeqCst);
                    outcome
                })
            };

            let events = ConsumerEvents::new(&broker, consumer, || done.load(Ordering::SeqCst));
            let report = run(&cfg, events, &mut sink).map_err(runtime)?;
            producer
                .join()
                .map_err(|_| runtime("replay thread panicked"))?
                .map_err(runtime)?;
            report
        }
    };

    manifest.output_paths = vec![args.out.display().to_string()];
    if let Some(lp) = &args.lp_out {
        manifest.output_paths.push(lp.display().to_string());
    }
    manifest.count("issued", report.issued);
    manifest.count("resolved", report.resolved);
    manifest.count("pending", report.pending);
    manifest.count("skipped", report.skipped);
    manifest.count("updates_applied", report.updates_applied);
    manifest.wall_time_ms = started.elapsed().as_millis();
    let manifest_path = manifest.write_next_to(&args.out).map_err(runtime)?;

    println!(
        "run complete: issued {}, resolved {}, pending {}, {} streaming updates -> {} (manifest {})",
        report.issued,
        report.resolved,
        report.pending,
        report.updates_applied,
        args.out.display(),
        manifest_path.display()
    );
    Ok(())
}

pub struct EvaluateArgs {
    pub forecasts: PathBuf,
    pub out: PathBuf,
    pub pr_out: Option<PathBuf>,
    pub thresholds: Vec<f64>,
}

pub fn cmd_evaluate(args: EvaluateArgs) -> Result<()> {
    let started = Instant::now();
    if args.thresholds.is_empty() {
        return Err(invalid("threshold grid is empty"));
    }
    if args.thresholds.iter().any(|t| !(0.0..=1.0).contains(t)) {
        return Err(invalid("thresholds must lie in [0, 1]"));
    }
    let records = parse_forecast_csv(&read_input(&args.forecasts, "forecast file")?)
        .map_err(invalid)?;
    let ledger = resolved_pairs(&records);
    if ledger.streaming.is_empty() {
        return Err(invalid("forecast file holds no resolved rows; nothing to evaluate"));
    }

    let mut manifest = RunManifest::new(
        "evaluate",
        json!({
            "forecasts": args.forecasts.display().to_string(),
            "thresholds": args.thresholds,
        }),
    );
    manifest.count("resolved_pairs", ledger.streaming.len() as u64);
    manifest.count("dropped_records", ledger.dropped);
    manifest.count("thresholds", args.thresholds.len() as u64);

    let report_csv;
    match &ledger.batch {
        Some(batch) => {
            let table =
                compare(&ledger.streaming, batch, &args.thresholds).map_err(runtime)?;
            report_csv = write_comparison_csv(&table);
            print!("{}", table.summary());
            if let Some(prefix) = &args.pr_out {
                let streaming_reports: Vec<_> =
                    table.rows.iter().map(|r| r.streaming.clone()).collect();
                let batch_reports: Vec<_> = table.rows.iter().map(|r| r.batch.clone()).collect();
                for (name, reports) in
                    [("streaming", streaming_reports), ("batch", batch_reports)]
                {
                    let path = pr_path(prefix, name);
                    write_output(&path, write_pr_curve_csv(&reports).as_bytes())?;
                    manifest.output_paths.push(path.display().to_string());
                }
            }
        }
        None => {
            let reports = sweep(&ledger.streaming, &args.thresholds);
            report_csv = write_sweep_csv("streaming", &reports);
            match best_f1(reports.iter()) {
                Some((threshold, f1)) => {
                    println!("streaming: best F1 {f1:.4} at threshold {threshold}")
                }
                None => println!("streaming: no threshold produced a defined F1"),
            }
            if let Some(prefix) = &args.pr_out {
                let path = pr_path(prefix, "streaming");
                write_output(&path, write_pr_curve_csv(&reports).as_bytes())?;
                manifest.output_paths.push(path.display().to_string());
            }
        }
    }
    write_output(&args.out, report_csv.as_bytes())?;
    manifest.output_paths.insert(0, args.out.display().to_string());
    manifest.wall_time_ms = started.elapsed().as_millis();
    let manifest_path = manifest.write_next_to(&args.out).map_err(runtime)?;
    println!(
        "report -> {} (manifest {})",
        args.out.display(),
        manifest_path.display()
    );
    Ok(())
}

fn pr_path(prefix: &Path, model: &str) -> PathBuf {
    let mut name = prefix.as_os_str().to_owned();
    name.push(format!("-{model}.csv"));
    PathBuf::from(name)
}

pub struct ReplayServeArgs {
    pub dataset: PathBuf,
    pub year: Option<i32>,
    pub from: Option<String>,
    pub to: Option<String>,
    pub addr: String,
    pub speedup: String,
    pub topic: String,
    pub max_conns: Option<usize>,
}

pub fn cmd_replay_serve(args: ReplayServeArgs) -> Result<()> {
    let speedup = Speedup::parse(&args.speedup).map_err(invalid)?;
    let sessions = load_sessions(&args.dataset)?;
    let range = match (&args.from, &args.to, args.year) {
        (Some(from), Some(to), _) => {
            let from = MinuteInstant::parse(from).map_err(invalid)?;
            let to = MinuteInstant::parse(to).map_err(invalid)?;
            MinuteRange::new(from, to).map_err(invalid)?
        }
        (None, None, Some(year)) => MinuteRange::year_endpoint_inclusive(year),
        _ => {
            return Err(invalid(
                "give either --year or both --from and --to (half-open range)",
            ))
        }
    };
    let labels = sessions_to_labels(&sessions, &range).map_err(invalid)?;

    let listener = TcpListener::bind(&args.addr)
        .map_err(|e| runtime(format!("cannot bind '{}': {e}", args.addr)))?;
    let local = listener.local_addr().map_err(runtime)?;
    println!(
        "serving topic '{}': {} samples [{} .. {}) on {local}",
        args.topic,
        labels.len(),
        range.start(),
        range.end()
    );
    std::io::stdout().flush().ok();

    let served = serve_replay(&listener, &labels, speedup, args.max_conns).map_err(runtime)?;
    // The reader of our stdout may already be gone; the trailing status
    // line is best-effort.
    let _ = writeln!(std::io::stdout(), "served {served} connection(s)");
    Ok(())
}
