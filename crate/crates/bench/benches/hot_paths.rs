//! Hot paths of the forecasting loop: feature encoding, prediction,
//! gradient steps, wire codec, broker throughput, threshold sweeps.

use chargecast_bench::{encoded, labeled_year};
use chargecast_core::domain::{CalendarContext, MinuteInstant};
use chargecast_core::eval::{default_grid, sweep};
use chargecast_core::featurize::encode;
use chargecast_core::model::ModelState;
use chargecast_core::pipeline::{run, MemorySink, PipelineConfig, UpdateWindow};
use chargecast_core::stream::{decode_sample, encode_sample, Broker};
use criterion::{criterion_group, criterion_main, BatchSize, Criterion, Throughput};
use std::hint::black_box;

fn bench_featurize(c: &mut Criterion) {
    let cal = CalendarContext::empty();
    let minute = MinuteInstant::parse("2018-09-22T13:37").unwrap();
    c.bench_function("featurize/encode_minute", |b| {
        b.iter(|| encode(black_box(&minute), &cal))
    });
}

fn bench_model(c: &mut Criterion) {
    let labels = labeled_year(2018);
    let examples = encoded(&labels[..4096]);
    let state = ModelState::zero(0.5, 1e-4);
    let x = examples[0].0;

    c.bench_function("model/predict_proba", |b| {
        b.iter(|| state.predict_proba(black_box(&x)))
    });

    let window = &examples[..15];
    c.bench_function("model/update_stream_w15", |b| {
        b.iter(|| state.update_stream(black_box(window)))
    });

    let mut group = c.benchmark_group("model/gradient_epoch");
    group.throughput(Throughput::Elements(examples.len() as u64));
    group.bench_function("4096_samples", |b| {
        b.iter(|| state.gradient_step(black_box(&examples)))
    });
    group.finish();
}

fn bench_codec_and_broker(c: &mut Criterion) {
    let labels = labeled_year(2018);
    let day = &labels[..1440];

    let sample = day[500];
    let payload = encode_sample(&sample);
    c.bench_function("stream/encode_sample", |b| {
        b.iter(|| encode_sample(black_box(&sample)))
    });
    c.bench_function("stream/decode_sample", |b| {
        b.iter(|| decode_sample(black_box(&payload)).unwrap())
    });

    let mut group = c.benchmark_group("stream/broker_day");
    group.throughput(Throughput::Elements(day.len() as u64));
    group.bench_function("publish_poll_1440", |b| {
        b.iter_batched(
            || {
                let broker = Broker::new();
                broker.create_topic("bench").unwrap();
                broker
            },
            |broker| {
                for s in day {
                    broker.publish("bench", &encode_sample(s)).unwrap();
                }
                let mut consumer = broker.subscribe("bench").unwrap();
                while !broker.poll(&mut consumer, 512).unwrap().is_empty() {}
            },
            BatchSize::SmallInput,
        )
    });
    group.finish();
}

fn bench_pipeline_day(c: &mut Criterion) {
    let labels = labeled_year(2018);
    let day: Vec<_> = labels[..1440].to_vec();
    let examples = encoded(&labels[..525_600]);
    let model = {
        // A few epochs are enough to get a realistic non-zero state.
        let cfg = chargecast_core::model::TrainConfig {
            epochs: 3,
            ..Default::default()
        };
        chargecast_core::model::fit_batch(&examples, &cfg).unwrap()
    };
    let cfg = PipelineConfig {
        horizon_minutes: 15,
        window: UpdateWindow::Samples(15),
        initial_model: model,
        calendar: CalendarContext::empty(),
        comparison: true,
    };
    let mut group = c.benchmark_group("pipeline/day");
    group.throughput(Throughput::Elements(1440));
    group.sample_size(20);
    group.bench_function("comparison_mode", |b| {
        b.iter(|| {
            let mut sink = MemorySink::default();
            run(&cfg, day.iter().copied().map(Ok), &mut sink).unwrap();
            sink.records.len()
        })
    });
    group.finish();
}

fn bench_eval(c: &mut Criterion) {
    let labels = labeled_year(2018);
    // A synthetic but realistically distributed probability column.
    let pairs: Vec<(f64, bool)> = labels
        .iter()
        .enumerate()
        .map(|(i, s)| (((i % 997) as f64) / 997.0 * 0.6, s.occupied))
        .collect();
    let mut group = c.benchmark_group("eval/sweep_year");
    group.throughput(Throughput::Elements(pairs.len() as u64));
    group.sample_size(20);
    group.bench_function("default_grid", |b| {
        b.iter(|| sweep(black_box(&pairs), &default_grid()))
    });
    group.finish();
}

criterion_group!(
    benches,
    bench_featurize,
    bench_model,
    bench_codec_and_broker,
    bench_pipeline_day,
    bench_eval
);
criterion_main!(benches);
