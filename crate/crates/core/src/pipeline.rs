//! The live forecasting loop.
//!
//! For each consumed minute event at time `t` the pipeline:
//!
//! 1. appends `(encode(t), label)` to the current update window;
//! 2. applies a streaming model update when the window holds `W` samples,
//!    then clears it;
//! 3. issues a forecast for `t + H` from the just-updated streaming model
//!    (and from the frozen batch model when comparison mode is on);
//! 4. resolves the pending forecast whose target is `t` against the event's
//!    label.
//!
//! Updates are counted in samples, not wall time, so replay speed cannot
//! change results. Records reach the sink ordered by issue time; forecasts
//! still unresolved when the stream ends are flushed with an empty actual.

use std::collections::VecDeque;
use std::fmt::Write as FmtWrite;
use std::io::Write;

use thiserror::Error;

use crate::domain::{CalendarContext, MinuteInstant, OccupancySample};
use crate::featurize::encode;
use crate::model::{LabeledMinute, ModelState};
use crate::stream::{Broker, ConsumerHandle, StreamError};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("events out of order: {prev} then {next}")]
    OutOfOrderEvent {
        prev: MinuteInstant,
        next: MinuteInstant,
    },
    #[error("invalid pipeline config: {0}")]
    InvalidConfig(String),
    #[error("duplicate forecast target {0}")]
    DuplicateTarget(MinuteInstant),
    #[error("duplicate ground-truth minute {0}")]
    DuplicateActual(MinuteInstant),
    #[error(transparent)]
    Stream(#[from] StreamError),
    #[error("sink: {0}")]
    Sink(#[from] std::io::Error),
    #[error("forecast file line {line}: {message}")]
    BadForecastLine { line: usize, message: String },
}

/// Streaming update cadence.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum UpdateWindow {
    /// Update after every `W` consumed samples.
    Samples(u32),
    /// Never update: the streaming model stays frozen (the ∞ sentinel).
    Disabled,
}

/// Pipeline configuration. `horizon_minutes` is the forecast lead time H;
/// the update window W controls how many samples accumulate between
/// streaming updates.
#[derive(Debug, Clone)]
pub struct PipelineConfig {
    pub horizon_minutes: u32,
    pub window: UpdateWindow,
    pub initial_model: ModelState,
    pub calendar: CalendarContext,
    /// Co-run the initial model frozen, for streaming-vs-batch comparison.
    pub comparison: bool,
}

impl PipelineConfig {
    pub fn new(initial_model: ModelState) -> Self {
        Self {
            horizon_minutes: 15,
            window: UpdateWindow::Samples(15),
            initial_model,
            calendar: CalendarContext::empty(),
            comparison: false,
        }
    }

    fn validate(&self) -> Result<(), PipelineError> {
        if self.horizon_minutes == 0 {
            return Err(PipelineError::InvalidConfig(
                "horizon must be at least one minute".into(),
            ));
        }
        if self.window == UpdateWindow::Samples(0) {
            return Err(PipelineError::InvalidConfig(
                "update window must be at least one sample".into(),
            ));
        }
        Ok(())
    }
}

/// One issued forecast, resolved once its target minute's event arrives.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastRecord {
    pub issued_at: MinuteInstant,
    pub target: MinuteInstant,
    pub prob_streaming: f64,
    pub prob_batch: Option<f64>,
    pub actual: Option<bool>,
}

/// Totals for one pipeline run. `resolved + skipped + pending = issued`.
#[derive(Debug, Clone)]
pub struct RunReport {
    pub issued: u64,
    pub resolved: u64,
    /// Forecasts whose target minute never appeared in the stream.
    pub skipped: u64,
    /// Forecasts still awaiting their target when the stream ended.
    pub pending: u64,
    pub updates_applied: u64,
    pub first_event: Option<MinuteInstant>,
    pub last_event: Option<MinuteInstant>,
    pub final_model: ModelState,
    /// The frozen comparison model, when comparison mode was on.
    pub batch_model: Option<ModelState>,
}

/// Destination for forecast records. Records arrive ordered by issue time.
pub trait ForecastSink {
    fn write_record(&mut self, record: &ForecastRecord) -> std::io::Result<()>;
    fn flush(&mut self) -> std::io::Result<()> {
        Ok(())
    }
}

/// Run the pipeline over an ordered stream of minute events.
///
/// `events` ends when the stream does; out-of-order or duplicate minutes
/// abort the run naming the offending timestamps.
pub fn run<I>(
    cfg: &PipelineConfig,
    events: I,
    sink: &mut dyn ForecastSink,
) -> Result<RunReport, PipelineError>
where
    I: IntoIterator<Item = Result<OccupancySample, StreamError>>,
{
    cfg.validate()?;
    let mut streaming = cfg.initial_model.clone();
    let batch = cfg.comparison.then(|| cfg.initial_model.clone());
    let horizon = cfg.horizon_minutes as i64;

    let mut window_buf: Vec<LabeledMinute> = Vec::new();
    let mut pending: VecDeque<ForecastRecord> = VecDeque::new();
    let mut report_counts = (0u64, 0u64, 0u64); // issued, resolved, skipped
    let mut updates_applied = 0u64;
    let mut first_event = None;
    let mut last_event: Option<MinuteInstant> = None;

    for event in events {
        let sample = event?;
        let t = sample.ts;
        if let Some(prev) = last_event {
            if t <= prev {
                return Err(PipelineError::OutOfOrderEvent { prev, next: t });
            }
        }
        first_event.get_or_insert(t);
        last_event = Some(t);

        // (1) extend the update window with this minute.
        let features = encode(&t, &cfg.calendar);
        window_buf.push((features, sample.occupied));

        // (2) update the streaming model every W samples.
        if let UpdateWindow::Samples(w) = cfg.window {
            if window_buf.len() == w as usize {
                streaming = streaming.update_stream(&window_buf);
                window_buf.clear();
                updates_applied += 1;
            }
        }

        // (3) forecast t + H from the just-updated model(s).
        let target = t.plus_minutes(horizon);
        let target_features = encode(&target, &cfg.calendar);
        pending.push_back(ForecastRecord {
            issued_at: t,
            target,
            prob_streaming: streaming.predict_proba(&target_features),
            prob_batch: batch.as_ref().map(|m| m.predict_proba(&target_features)),
            actual: None,
        });
        report_counts.0 += 1;

        // (4) resolve forecasts whose target has arrived. Targets the stream
        // skipped are flushed unresolved to keep sink order by issue time.
        while let Some(front) = pending.front() {
            if front.target > t {
                break;
            }
            let mut record = pending.pop_front().expect("front exists");
            if record.target == t {
                record.actual = Some(sample.occupied);
                report_counts.1 += 1;
            } else {
                report_counts.2 += 1;
            }
            sink.write_record(&record)?;
        }
    }

    // The trailing H forecasts have no observed targets; flush them pending.
    let pending_count = pending.len() as u64;
    for record in pending {
        sink.write_record(&record)?;
    }
    sink.flush()?;

    Ok(RunReport {
        issued: report_counts.0,
        resolved: report_counts.1,
        skipped: report_counts.2,
        pending: pending_count,
        updates_applied,
        first_event,
        last_event,
        final_model: streaming,
        batch_model: batch,
    })
}

/// Adapter that drains a broker topic as a pipeline event stream.
///
/// Polls in batches; when the topic is exhausted it either ends (if
/// `producer_done` reports true) or naps and retries, so it works both for
/// pre-filled topics and for a replayer running on another thread.
pub struct ConsumerEvents<'a, F: Fn() -> bool> {
    broker: &'a Broker,
    consumer: ConsumerHandle,
    producer_done: F,
    buffer: VecDeque<Vec<u8>>,
}

impl<'a, F: Fn() -> bool> ConsumerEvents<'a, F> {
    pub fn new(broker: &'a Broker, consumer: ConsumerHandle, producer_done: F) -> Self {
        Self {
            broker,
            consumer,
            producer_done,
            buffer: VecDeque::new(),
        }
    }
}

impl<F: Fn() -> bool> Iterator for ConsumerEvents<'_, F> {
    type Item = Result<OccupancySample, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            if let Some(payload) = self.buffer.pop_front() {
                return Some(crate::stream::decode_sample(&payload));
            }
            match self.broker.poll(&mut self.consumer, 4096) {
                Ok(batch) if batch.is_empty() => {
                    if (self.producer_done)() {
                        // One final poll closes the race where the producer
                        // finished between our poll and the done check.
                        match self.broker.poll(&mut self.consumer, 4096) {
                            Ok(batch) if batch.is_empty() => return None,
                            Ok(batch) => {
                                self.buffer.extend(batch.into_iter().map(|(_, p)| p));
                            }
                            Err(e) => return Some(Err(e)),
                        }
                    } else {
                        std::thread::sleep(std::time::Duration::from_millis(1));
                    }
                }
                Ok(batch) => {
                    self.buffer.extend(batch.into_iter().map(|(_, p)| p));
                }
                Err(e) => return Some(Err(e)),
            }
        }
    }
}

/// Probability/actual pairs per model, aligned on target order.
#[derive(Debug, Clone, Default)]
pub struct ResolvedLedger {
    pub streaming: Vec<(f64, bool)>,
    pub batch: Option<Vec<(f64, bool)>>,
    /// Forecasts whose target had no ground truth.
    pub dropped: u64,
}

/// Join forecasts to a separate ground-truth sequence on the target minute.
/// Unmatched forecasts are dropped and counted; output is ordered by target.
pub fn resolve_ledger(
    records: &[ForecastRecord],
    actuals: &[OccupancySample],
) -> Result<ResolvedLedger, PipelineError> {
    let mut truth = std::collections::BTreeMap::new();
    for a in actuals {
        if truth.insert(a.ts, a.occupied).is_some() {
            return Err(PipelineError::DuplicateActual(a.ts));
        }
    }
    let mut sorted: Vec<&ForecastRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.target);
    for pair in sorted.windows(2) {
        if pair[0].target == pair[1].target {
            return Err(PipelineError::DuplicateTarget(pair[0].target));
        }
    }
    let has_batch = records.iter().any(|r| r.prob_batch.is_some());
    let mut ledger = ResolvedLedger {
        batch: has_batch.then(Vec::new),
        ..Default::default()
    };
    for record in sorted {
        match truth.get(&record.target) {
            Some(&occupied) => {
                ledger.streaming.push((record.prob_streaming, occupied));
                if let (Some(batch), Some(p)) = (ledger.batch.as_mut(), record.prob_batch) {
                    batch.push((p, occupied));
                }
            }
            None => ledger.dropped += 1,
        }
    }
    Ok(ledger)
}

/// Extract per-model pairs from records the pipeline already resolved
/// in-stream (the forecast CSV path).
pub fn resolved_pairs(records: &[ForecastRecord]) -> ResolvedLedger {
    let has_batch = records.iter().any(|r| r.prob_batch.is_some());
    let mut ledger = ResolvedLedger {
        batch: has_batch.then(Vec::new),
        ..Default::default()
    };
    let mut resolved: Vec<&ForecastRecord> =
        records.iter().filter(|r| r.actual.is_some()).collect();
    resolved.sort_by_key(|r| r.target);
    for record in resolved {
        let actual = record.actual.expect("filtered on is_some");
        ledger.streaming.push((record.prob_streaming, actual));
        if let (Some(batch), Some(p)) = (ledger.batch.as_mut(), record.prob_batch) {
            batch.push((p, actual));
        }
    }
    ledger.dropped = records.len() as u64 - ledger.streaming.len() as u64;
    ledger
}

// --- sinks -------------------------------------------------------------------

pub const FORECAST_CSV_HEADER: &str = "issued_at,target,prob_streaming,prob_batch,actual";

/// CSV sink: `issued_at,target,prob_streaming,prob_batch,actual` with empty
/// fields for absent values.
pub struct CsvForecastSink<W: Write> {
    writer: W,
    wrote_header: bool,
}

impl<W: Write> CsvForecastSink<W> {
    pub fn new(writer: W) -> Self {
        Self {
            writer,
            wrote_header: false,
        }
    }

    pub fn into_inner(self) -> W {
        self.writer
    }
}

impl<W: Write> ForecastSink for CsvForecastSink<W> {
    fn write_record(&mut self, record: &ForecastRecord) -> std::io::Result<()> {
        if !self.wrote_header {
            writeln!(self.writer, "{FORECAST_CSV_HEADER}")?;
            self.wrote_header = true;
        }
        let batch = record
            .prob_batch
            .map(|p| p.to_string())
            .unwrap_or_default();
        let actual = record
            .actual
            .map(|a| (a as u8).to_string())
            .unwrap_or_default();
        writeln!(
            self.writer,
            "{},{},{},{},{}",
            record.issued_at, record.target, record.prob_streaming, batch, actual
        )
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}

/// Line-protocol sink for time-series dashboards:
/// `occupancy,model=<streaming|batch> prob=<float> <epoch-ns>`, timestamped
/// at the forecast target minute.
pub struct LineProtocolSink<W: Write> {
    writer: W,
}

impl<W: Write> LineProtocolSink<W> {
    pub fn new(writer: W) -> Self {
        Self { writer }
    }
}

impl<W: Write> ForecastSink for LineProtocolSink<W> {
    fn write_record(&mut self, record: &ForecastRecord) -> std::io::Result<()> {
        let ns = record.target.epoch_nanos();
        writeln!(
            self.writer,
            "occupancy,model=streaming prob={} {}",
            record.prob_streaming, ns
        )?;
        if let Some(p) = record.prob_batch {
            writeln!(self.writer, "occupancy,model=batch prob={} {}", p, ns)?;
        }
        Ok(())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        self.writer.flush()
    }
}

/// Collects records in memory; test and analysis helper.
#[derive(Default)]
pub struct MemorySink {
    pub records: Vec<ForecastRecord>,
}

impl ForecastSink for MemorySink {
    fn write_record(&mut self, record: &ForecastRecord) -> std::io::Result<()> {
        self.records.push(record.clone());
        Ok(())
    }
}

/// Fans records out to several sinks in order.
pub struct MultiSink<'a> {
    sinks: Vec<&'a mut dyn ForecastSink>,
}

impl<'a> MultiSink<'a> {
    pub fn new(sinks: Vec<&'a mut dyn ForecastSink>) -> Self {
        Self { sinks }
    }
}

impl ForecastSink for MultiSink<'_> {
    fn write_record(&mut self, record: &ForecastRecord) -> std::io::Result<()> {
        for sink in &mut self.sinks {
            sink.write_record(record)?;
        }
        Ok(())
    }

    fn flush(&mut self) -> std::io::Result<()> {
        for sink in &mut self.sinks {
            sink.flush()?;
        }
        Ok(())
    }
}

/// Serialize records to the forecast CSV format.
pub fn write_forecast_csv(records: &[ForecastRecord]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{FORECAST_CSV_HEADER}");
    for r in records {
        let batch = r.prob_batch.map(|p| p.to_string()).unwrap_or_default();
        let actual = r.actual.map(|a| (a as u8).to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            r.issued_at, r.target, r.prob_streaming, batch, actual
        );
    }
    out
}

/// Parse the forecast CSV format.
pub fn parse_forecast_csv(text: &str) -> Result<Vec<ForecastRecord>, PipelineError> {
    let bad = |line: usize, message: String| PipelineError::BadForecastLine { line, message };
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, header)) if header.trim() == FORECAST_CSV_HEADER => {}
        Some((_, header)) => return Err(bad(1, format!("unexpected header '{header}'"))),
        None => return Err(bad(1, "empty file".into())),
    }
    let mut records = Vec::new();
    for (idx, raw) in lines {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 5 {
            return Err(bad(idx + 1, format!("expected 5 fields, got {}", fields.len())));
        }
        let issued_at =
            MinuteInstant::parse(fields[0]).map_err(|e| bad(idx + 1, e.to_string()))?;
        let target = MinuteInstant::parse(fields[1]).map_err(|e| bad(idx + 1, e.to_string()))?;
        let prob_streaming: f64 = fields[2]
            .parse()
            .map_err(|e| bad(idx + 1, format!("prob_streaming: {e}")))?;
        let prob_batch = if fields[3].is_empty() {
            None
        } else {
            Some(
                fields[3]
                    .parse()
                    .map_err(|e| bad(idx + 1, format!("prob_batch: {e}")))?,
            )
        };
        let actual = match fields[4] {
            "" => None,
            "0" => Some(false),
            "1" => Some(true),
            other => return Err(bad(idx + 1, format!("actual must be 0, 1 or empty, got '{other}'"))),
        };
        records.push(ForecastRecord {
            issued_at,
            target,
            prob_streaming,
            prob_batch,
            actual,
        });
    }
    Ok(records)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::domain::{sessions_to_labels, ChargeSession, MinuteRange};
    use crate::model::{fit_batch, TrainConfig};

    fn at(s: &str) -> MinuteInstant {
        MinuteInstant::parse(s).unwrap()
    }

    fn day_samples(start: &str, n: usize) -> Vec<OccupancySample> {
        let start = at(start);
        (0..n)
            .map(|i| {
                OccupancySample::new(
                    start.plus_minutes(i as i64),
                    (300..420).contains(&(i % 1440)),
                )
            })
            .collect()
    }

    fn day_events(
        start: &str,
        n: usize,
    ) -> impl Iterator<Item = Result<OccupancySample, StreamError>> {
        day_samples(start, n).into_iter().map(Ok)
    }

    fn toy_model() -> ModelState {
        let labels = sessions_to_labels(
            &[ChargeSession::new(at("2018-01-02T10:00"), 120).unwrap()],
            &MinuteRange::new(at("2018-01-02T00:00"), at("2018-01-03T00:00")).unwrap(),
        )
        .unwrap();
        let data: Vec<LabeledMinute> = labels
            .iter()
            .map(|s| (encode(&s.ts, &CalendarContext::empty()), s.occupied))
            .collect();
        fit_batch(
            &data,
            &TrainConfig {
                epochs: 20,
                ..TrainConfig::default()
            },
        )
        .unwrap()
    }

    #[test]
    fn one_day_run_boundary_arithmetic() {
        let cfg = PipelineConfig {
            comparison: true,
            ..PipelineConfig::new(toy_model())
        };
        let mut sink = MemorySink::default();
        let report = run(&cfg, day_events("2018-03-05T00:00", 1440), &mut sink).unwrap();
        assert_eq!(report.issued, 1440);
        assert_eq!(report.resolved, 1425);
        assert_eq!(report.pending, 15);
        assert_eq!(report.skipped, 0);
        assert_eq!(report.issued, report.resolved + report.pending + report.skipped);
        assert_eq!(sink.records.len(), 1440);
        // Updates: 1440 / 15 per window.
        assert_eq!(report.updates_applied, 96);
        assert_eq!(report.final_model.updates(), 96);
        // Records are ordered by issue time and resolved except the tail.
        for (i, r) in sink.records.iter().enumerate() {
            assert_eq!(r.issued_at, at("2018-03-05T00:00").plus_minutes(i as i64));
            assert_eq!(r.target, r.issued_at.plus_minutes(15));
            assert_eq!(r.actual.is_some(), i < 1425);
        }
    }

    #[test]
    fn one_week_run_issues_ten_thousand_eighty() {
        let cfg = PipelineConfig::new(toy_model());
        let mut sink = MemorySink::default();
        let report = run(&cfg, day_events("2018-09-22T00:00", 7 * 1440), &mut sink).unwrap();
        assert_eq!(report.issued, 10_080);
        assert_eq!(report.resolved, 10_065);
    }

    #[test]
    fn disabled_window_keeps_columns_identical() {
        let cfg = PipelineConfig {
            window: UpdateWindow::Disabled,
            comparison: true,
            ..PipelineConfig::new(toy_model())
        };
        let mut sink = MemorySink::default();
        let report = run(&cfg, day_events("2018-03-05T00:00", 1440), &mut sink).unwrap();
        assert_eq!(report.updates_applied, 0);
        for r in &sink.records {
            assert_eq!(Some(r.prob_streaming), r.prob_batch);
        }
        assert_eq!(report.final_model, cfg.initial_model);
    }

    #[test]
    fn batch_model_is_bit_identical_across_the_run() {
        let cfg = PipelineConfig {
            comparison: true,
            ..PipelineConfig::new(toy_model())
        };
        let mut sink = MemorySink::default();
        let report = run(&cfg, day_events("2018-03-05T00:00", 1440), &mut sink).unwrap();
        let batch = report.batch_model.unwrap();
        assert_eq!(batch.save(), cfg.initial_model.save());
        // And the streaming model moved.
        assert_ne!(report.final_model, cfg.initial_model);
    }

    #[test]
    fn out_of_order_event_names_timestamps() {
        let cfg = PipelineConfig::new(toy_model());
        let mut samples = day_samples("2018-03-05T00:00", 10);
        samples.swap(4, 5);
        let mut sink = MemorySink::default();
        let err = run(&cfg, samples.into_iter().map(Ok), &mut sink).unwrap_err();
        match err {
            PipelineError::OutOfOrderEvent { prev, next } => {
                assert_eq!(prev, at("2018-03-05T00:05"));
                assert_eq!(next, at("2018-03-05T00:04"));
            }
            other => panic!("unexpected {other}"),
        }
    }

    #[test]
    fn duplicate_event_is_rejected() {
        let cfg = PipelineConfig::new(toy_model());
        let t = at("2018-03-05T00:00");
        let events = vec![
            Ok(OccupancySample::new(t, false)),
            Ok(OccupancySample::new(t, true)),
        ];
        let mut sink = MemorySink::default();
        assert!(matches!(
            run(&cfg, events, &mut sink),
            Err(PipelineError::OutOfOrderEvent { .. })
        ));
    }

    #[test]
    fn gap_in_stream_skips_unmatched_targets() {
        let cfg = PipelineConfig::new(toy_model());
        let start = at("2018-03-05T00:00");
        // 30 dense minutes, then a 10-minute hole, then 30 more.
        let mut events: Vec<Result<OccupancySample, StreamError>> = Vec::new();
        for i in 0..30 {
            events.push(Ok(OccupancySample::new(start.plus_minutes(i), false)));
        }
        for i in 40..70 {
            events.push(Ok(OccupancySample::new(start.plus_minutes(i), false)));
        }
        let mut sink = MemorySink::default();
        let report = run(&cfg, events, &mut sink).unwrap();
        assert_eq!(report.issued, 60);
        assert_eq!(report.skipped, 10, "targets inside the hole are unmatched");
        assert_eq!(report.issued, report.resolved + report.skipped + report.pending);
    }

    #[test]
    fn forecast_uses_prefix_only_model() {
        // Causality: the forecast issued at t is identical whether or not
        // later events exist.
        let cfg = PipelineConfig {
            comparison: false,
            ..PipelineConfig::new(toy_model())
        };
        let samples = day_samples("2018-03-05T00:00", 600);
        let mut full_sink = MemorySink::default();
        run(&cfg, samples.iter().copied().map(Ok), &mut full_sink).unwrap();
        for cut in [1usize, 137, 300, 599] {
            let mut prefix_sink = MemorySink::default();
            run(&cfg, samples[..cut].iter().copied().map(Ok), &mut prefix_sink).unwrap();
            let last = prefix_sink.records.last().unwrap();
            let full = &full_sink.records[cut - 1];
            assert_eq!(last.issued_at, full.issued_at);
            assert_eq!(last.prob_streaming.to_bits(), full.prob_streaming.to_bits());
        }
    }

    #[test]
    fn unthrottled_broker_and_direct_runs_agree() {
        let broker = Broker::new();
        broker.create_topic("t").unwrap();
        let samples = day_samples("2018-03-05T00:00", 300);
        crate::stream::replay(&broker, "t", &samples, crate::stream::Speedup::Unthrottled)
            .unwrap();
        let consumer = broker.subscribe("t").unwrap();
        let cfg = PipelineConfig {
            comparison: true,
            ..PipelineConfig::new(toy_model())
        };
        let mut via_broker = MemorySink::default();
        run(
            &cfg,
            ConsumerEvents::new(&broker, consumer, || true),
            &mut via_broker,
        )
        .unwrap();
        let mut direct = MemorySink::default();
        run(&cfg, samples.into_iter().map(Ok), &mut direct).unwrap();
        assert_eq!(via_broker.records, direct.records);
    }

    #[test]
    fn resolve_ledger_joins_in_target_order() {
        let mk = |issued: &str, p: f64| ForecastRecord {
            issued_at: at(issued),
            target: at(issued).plus_minutes(15),
            prob_streaming: p,
            prob_batch: Some(p / 2.0),
            actual: None,
        };
        let records = vec![
            mk("2018-03-05T00:02", 0.3),
            mk("2018-03-05T00:00", 0.1),
            mk("2018-03-05T00:01", 0.2),
        ];
        let actuals = vec![
            OccupancySample::new(at("2018-03-05T00:15"), true),
            OccupancySample::new(at("2018-03-05T00:16"), false),
            OccupancySample::new(at("2018-03-05T00:17"), true),
        ];
        let ledger = resolve_ledger(&records, &actuals).unwrap();
        assert_eq!(ledger.streaming, vec![(0.1, true), (0.2, false), (0.3, true)]);
        assert_eq!(
            ledger.batch.unwrap(),
            vec![(0.05, true), (0.1, false), (0.15, true)]
        );
        assert_eq!(ledger.dropped, 0);
    }

    #[test]
    fn resolve_ledger_drops_and_counts_unmatched() {
        let record = ForecastRecord {
            issued_at: at("2018-03-05T00:00"),
            target: at("2018-03-05T00:15"),
            prob_streaming: 0.4,
            prob_batch: None,
            actual: None,
        };
        let ledger = resolve_ledger(&[record], &[]).unwrap();
        assert!(ledger.streaming.is_empty());
        assert_eq!(ledger.dropped, 1);
        let empty = resolve_ledger(&[], &[]).unwrap();
        assert!(empty.streaming.is_empty());
        assert_eq!(empty.dropped, 0);
    }

    #[test]
    fn resolve_ledger_rejects_duplicates() {
        let record = |p: f64| ForecastRecord {
            issued_at: at("2018-03-05T00:00"),
            target: at("2018-03-05T00:15"),
            prob_streaming: p,
            prob_batch: None,
            actual: None,
        };
        let err = resolve_ledger(&[record(0.1), record(0.2)], &[]).unwrap_err();
        assert!(matches!(err, PipelineError::DuplicateTarget(_)));

        let dup = OccupancySample::new(at("2018-03-05T00:15"), true);
        assert!(matches!(
            resolve_ledger(&[record(0.1)], &[dup, dup]),
            Err(PipelineError::DuplicateActual(_))
        ));
    }

    #[test]
    fn forecast_csv_round_trip() {
        let cfg = PipelineConfig {
            comparison: true,
            ..PipelineConfig::new(toy_model())
        };
        let mut sink = MemorySink::default();
        run(&cfg, day_events("2018-03-05T00:00", 100), &mut sink).unwrap();
        let text = write_forecast_csv(&sink.records);
        assert!(text.starts_with(FORECAST_CSV_HEADER));
        let parsed = parse_forecast_csv(&text).unwrap();
        assert_eq!(parsed, sink.records);

        assert!(parse_forecast_csv("nope\n").is_err());
        assert!(parse_forecast_csv(
            "issued_at,target,prob_streaming,prob_batch,actual\nx,y,z,,\n"
        )
        .is_err());
    }

    #[test]
    fn csv_sink_matches_serializer() {
        let cfg = PipelineConfig {
            comparison: true,
            ..PipelineConfig::new(toy_model())
        };
        let mut memory = MemorySink::default();
        run(&cfg, day_events("2018-03-05T00:00", 50), &mut memory).unwrap();
        let mut csv = CsvForecastSink::new(Vec::new());
        for r in &memory.records {
            csv.write_record(r).unwrap();
        }
        let bytes = csv.into_inner();
        assert_eq!(
            String::from_utf8(bytes).unwrap(),
            write_forecast_csv(&memory.records)
        );
    }

    #[test]
    fn line_protocol_format() {
        let record = ForecastRecord {
            issued_at: at("2018-09-22T07:00"),
            target: at("2018-09-22T07:15"),
            prob_streaming: 0.25,
            prob_batch: Some(0.5),
            actual: None,
        };
        let mut sink = LineProtocolSink::new(Vec::new());
        sink.write_record(&record).unwrap();
        let text = String::from_utf8(sink.writer).unwrap();
        let ns = at("2018-09-22T07:15").epoch_nanos();
        assert_eq!(
            text,
            format!(
                "occupancy,model=streaming prob=0.25 {ns}\noccupancy,model=batch prob=0.5 {ns}\n"
            )
        );
    }

    #[test]
    fn determinism_same_events_same_records() {
        let cfg = PipelineConfig {
            comparison: true,
            ..PipelineConfig::new(toy_model())
        };
        let mut a = MemorySink::default();
        let mut b = MemorySink::default();
        run(&cfg, day_events("2018-03-05T00:00", 500), &mut a).unwrap();
        run(&cfg, day_events("2018-03-05T00:00", 500), &mut b).unwrap();
        assert_eq!(write_forecast_csv(&a.records), write_forecast_csv(&b.records));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let mut cfg = PipelineConfig::new(toy_model());
        cfg.horizon_minutes = 0;
        let mut sink = MemorySink::default();
        assert!(matches!(
            run(&cfg, Vec::new(), &mut sink),
            Err(PipelineError::InvalidConfig(_))
        ));
        let mut cfg = PipelineConfig::new(toy_model());
        cfg.window = UpdateWindow::Samples(0);
        assert!(matches!(
            run(&cfg, Vec::new(), &mut sink),
            Err(PipelineError::InvalidConfig(_))
        ));
    }
}
