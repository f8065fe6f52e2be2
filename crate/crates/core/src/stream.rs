//! Topic-based event replay: an append-only ordered log with
//! offset-tracking consumers, a replayer that turns labeled minutes into a
//! record stream, and an optional NDJSON-over-TCP front so producer and
//! pipeline can run as separate processes.
//!
//! Offsets are dense per topic, starting at 0, and never reorder. Consumer
//! offsets are not persistent: a new run starts from 0. Delivery inside a
//! process is exactly-once per consumer.

use std::collections::HashMap;
use std::io::{BufRead, BufReader, Write};
use std::net::{TcpListener, TcpStream, ToSocketAddrs};
use std::sync::Mutex;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::{MinuteInstant, OccupancySample};

#[derive(Debug, Error)]
pub enum StreamError {
    #[error("unknown topic '{0}'")]
    UnknownTopic(String),
    #[error("topic '{0}' already exists")]
    TopicExists(String),
    #[error("replay source is not strictly increasing: {prev} then {next}")]
    UnsortedSource {
        prev: MinuteInstant,
        next: MinuteInstant,
    },
    #[error("invalid speedup '{0}': expected a positive number or 'max'")]
    BadSpeedup(String),
    #[error("cannot decode record: {0}")]
    Codec(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Replay pacing: either a real-time multiplier or flat out.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Speedup {
    /// Publish one simulated minute every `60 / factor` wall seconds.
    Factor(f64),
    /// Publish back-to-back with no pacing.
    Unthrottled,
}

impl Speedup {
    pub fn parse(s: &str) -> Result<Self, StreamError> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(Self::Unthrottled);
        }
        match s.parse::<f64>() {
            Ok(f) if f > 0.0 && f.is_finite() => Ok(Self::Factor(f)),
            _ => Err(StreamError::BadSpeedup(s.to_owned())),
        }
    }

    fn delay(&self) -> Option<Duration> {
        match self {
            Self::Unthrottled => None,
            Self::Factor(f) => Some(Duration::from_secs_f64(60.0 / f)),
        }
    }
}

#[derive(Default)]
struct Topic {
    records: Vec<Vec<u8>>,
}

/// In-process broker: named append-only topics behind one lock. Appends are
/// serialized; consumers each own their offset and may poll concurrently.
#[derive(Default)]
pub struct Broker {
    topics: Mutex<HashMap<String, Topic>>,
}

/// A consumer's position in a topic.
#[derive(Debug, Clone)]
pub struct ConsumerHandle {
    topic: String,
    committed: u64,
}

impl ConsumerHandle {
    pub fn topic(&self) -> &str {
        &self.topic
    }

    /// Offset of the next record this consumer will see.
    pub fn committed(&self) -> u64 {
        self.committed
    }
}

impl Broker {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn create_topic(&self, name: &str) -> Result<(), StreamError> {
        let mut topics = self.topics.lock().unwrap();
        if topics.contains_key(name) {
            return Err(StreamError::TopicExists(name.to_owned()));
        }
        topics.insert(name.to_owned(), Topic::default());
        Ok(())
    }

    /// Append a record; returns its offset.
    pub fn publish(&self, topic: &str, payload: &[u8]) -> Result<u64, StreamError> {
        let mut topics = self.topics.lock().unwrap();
        let t = topics
            .get_mut(topic)
            .ok_or_else(|| StreamError::UnknownTopic(topic.to_owned()))?;
        t.records.push(payload.to_vec());
        Ok(t.records.len() as u64 - 1)
    }

    /// Next offset to be assigned (== record count).
    pub fn end_offset(&self, topic: &str) -> Result<u64, StreamError> {
        let topics = self.topics.lock().unwrap();
        topics
            .get(topic)
            .map(|t| t.records.len() as u64)
            .ok_or_else(|| StreamError::UnknownTopic(topic.to_owned()))
    }

    /// New consumer starting at offset 0.
    pub fn subscribe(&self, topic: &str) -> Result<ConsumerHandle, StreamError> {
        let topics = self.topics.lock().unwrap();
        if !topics.contains_key(topic) {
            return Err(StreamError::UnknownTopic(topic.to_owned()));
        }
        Ok(ConsumerHandle {
            topic: topic.to_owned(),
            committed: 0,
        })
    }

    /// Return up to `max` records past the consumer's committed offset, in
    /// order, and advance the offset past them. Empty when caught up; never
    /// blocks.
    pub fn poll(
        &self,
        consumer: &mut ConsumerHandle,
        max: usize,
    ) -> Result<Vec<(u64, Vec<u8>)>, StreamError> {
        let topics = self.topics.lock().unwrap();
        let t = topics
            .get(&consumer.topic)
            .ok_or_else(|| StreamError::UnknownTopic(consumer.topic.clone()))?;
        let start = consumer.committed as usize;
        let end = t.records.len().min(start + max);
        let batch: Vec<(u64, Vec<u8>)> = (start..end)
            .map(|i| (i as u64, t.records[i].clone()))
            .collect();
        consumer.committed = end as u64;
        Ok(batch)
    }
}

// --- record wire format ------------------------------------------------------

#[derive(Serialize, Deserialize)]
struct WireSample {
    ts: String,
    occupied: u8,
}

/// Encode a sample as the JSON record `{"ts":"YYYY-MM-DDTHH:MM","occupied":0|1}`.
pub fn encode_sample(sample: &OccupancySample) -> Vec<u8> {
    serde_json::to_vec(&WireSample {
        ts: sample.ts.to_string(),
        occupied: sample.occupied as u8,
    })
    .expect("wire sample always serializes")
}

/// Decode a JSON record back into a sample.
pub fn decode_sample(payload: &[u8]) -> Result<OccupancySample, StreamError> {
    let wire: WireSample =
        serde_json::from_slice(payload).map_err(|e| StreamError::Codec(e.to_string()))?;
    let ts = MinuteInstant::parse(&wire.ts).map_err(|e| StreamError::Codec(e.to_string()))?;
    let occupied = match wire.occupied {
        0 => false,
        1 => true,
        other => {
            return Err(StreamError::Codec(format!(
                "occupied must be 0 or 1, got {other}"
            )))
        }
    };
    Ok(OccupancySample::new(ts, occupied))
}

/// Replay completion report.
#[derive(Debug, Clone, PartialEq)]
pub struct ReplayReport {
    pub published: u64,
    pub first: Option<MinuteInstant>,
    pub last: Option<MinuteInstant>,
}

/// Validate that `samples` are strictly increasing by minute.
fn validate_source(samples: &[OccupancySample]) -> Result<(), StreamError> {
    for pair in samples.windows(2) {
        if pair[1].ts <= pair[0].ts {
            return Err(StreamError::UnsortedSource {
                prev: pair[0].ts,
                next: pair[1].ts,
            });
        }
    }
    Ok(())
}

/// Publish every sample to `topic` in timestamp order. The source is
/// validated before anything is published; with a finite speedup the
/// replayer sleeps `60 / factor` seconds between records.
pub fn replay(
    broker: &Broker,
    topic: &str,
    samples: &[OccupancySample],
    speedup: Speedup,
) -> Result<ReplayReport, StreamError> {
    validate_source(samples)?;
    broker.end_offset(topic)?; // fail before publishing if the topic is unknown
    let delay = speedup.delay();
    for (i, sample) in samples.iter().enumerate() {
        if i > 0 {
            if let Some(d) = delay {
                std::thread::sleep(d);
            }
        }
        broker.publish(topic, &encode_sample(sample))?;
    }
    Ok(ReplayReport {
        published: samples.len() as u64,
        first: samples.first().map(|s| s.ts),
        last: samples.last().map(|s| s.ts),
    })
}

// --- NDJSON TCP front --------------------------------------------------------

/// Serve the sample stream over TCP: each accepted connection receives every
/// sample as one JSON record per line, paced by `speedup`, then the
/// connection closes (end of stream). Serves `max_connections` clients when
/// given, otherwise accepts forever.
pub fn serve_replay(
    listener: &TcpListener,
    samples: &[OccupancySample],
    speedup: Speedup,
    max_connections: Option<usize>,
) -> Result<u64, StreamError> {
    validate_source(samples)?;
    let delay = speedup.delay();
    let mut served = 0u64;
    for (conn_idx, stream) in listener.incoming().enumerate() {
        let mut stream = stream?;
        for (i, sample) in samples.iter().enumerate() {
            if i > 0 {
                if let Some(d) = delay {
                    std::thread::sleep(d);
                }
            }
            stream.write_all(&encode_sample(sample))?;
            stream.write_all(b"\n")?;
        }
        stream.flush()?;
        served += 1;
        if let Some(max) = max_connections {
            if conn_idx + 1 >= max {
                break;
            }
        }
    }
    Ok(served)
}

/// Iterator over NDJSON-encoded samples from any line-oriented reader.
/// Ends at EOF (connection close).
pub struct NdjsonSampleReader<R: BufRead> {
    lines: std::io::Lines<R>,
}

impl<R: BufRead> NdjsonSampleReader<R> {
    pub fn new(reader: R) -> Self {
        Self {
            lines: reader.lines(),
        }
    }
}

impl<R: BufRead> Iterator for NdjsonSampleReader<R> {
    type Item = Result<OccupancySample, StreamError>;

    fn next(&mut self) -> Option<Self::Item> {
        loop {
            match self.lines.next()? {
                Ok(line) if line.trim().is_empty() => continue,
                Ok(line) => return Some(decode_sample(line.as_bytes())),
                Err(e) => return Some(Err(e.into())),
            }
        }
    }
}

/// Connect to a replay server and stream its samples.
pub fn connect_sample_stream<A: ToSocketAddrs>(
    addr: A,
) -> Result<NdjsonSampleReader<BufReader<TcpStream>>, StreamError> {
    let stream = TcpStream::connect(addr)?;
    Ok(NdjsonSampleReader::new(BufReader::new(stream)))
}
