//! Core time and data types shared by all modules.
//!
//! Everything here is an immutable value type. Timestamps are naive local
//! civil time at minute resolution — no time zone, no DST shifts, seconds
//! always zero. Charge sessions are half-open minute intervals
//! `[start, start + duration)` so that back-to-back sessions never
//! double-count a minute.

use std::collections::BTreeSet;
use std::fmt;

use chrono::{Datelike, Duration, NaiveDate, NaiveDateTime, Timelike};
use thiserror::Error;

/// Errors produced by domain-type validation.
#[derive(Debug, Error)]
pub enum DomainError {
    #[error("invalid civil time {year:04}-{month:02}-{day:02}T{hour:02}:{minute:02}")]
    InvalidCivilTime {
        year: i32,
        month: u32,
        day: u32,
        hour: u32,
        minute: u32,
    },
    #[error("cannot parse '{input}' as a minute timestamp (expected YYYY-MM-DDTHH:MM)")]
    ParseTimestamp { input: String },
    #[error("cannot parse '{input}' as a date (expected YYYY-MM-DD)")]
    ParseDate { input: String },
    #[error("session duration must be at least one minute")]
    ZeroDuration,
    #[error("sessions overlap: [{first_start}, +{first_duration}m) collides with [{second_start}, +{second_duration}m)")]
    OverlappingSessions {
        first_start: MinuteInstant,
        first_duration: u32,
        second_start: MinuteInstant,
        second_duration: u32,
    },
    #[error("minute range is empty: start {start} is not before end {end}")]
    EmptyRange {
        start: MinuteInstant,
        end: MinuteInstant,
    },
}

/// A civil timestamp at minute resolution.
///
/// Wraps a seconds-free [`NaiveDateTime`]; construction guarantees the
/// seconds (and sub-second) components are zero, so ordering, arithmetic
/// and formatting all operate on a whole-minute grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct MinuteInstant(NaiveDateTime);

impl MinuteInstant {
    /// Build an instant from civil components.
    pub fn new(year: i32, month: u32, day: u32, hour: u32, minute: u32) -> Result<Self, DomainError> {
        let invalid = || DomainError::InvalidCivilTime {
            year,
            month,
            day,
            hour,
            minute,
        };
        let date = NaiveDate::from_ymd_opt(year, month, day).ok_or_else(invalid)?;
        let dt = date.and_hms_opt(hour, minute, 0).ok_or_else(invalid)?;
        Ok(Self(dt))
    }

    /// First minute of a calendar year.
    pub fn year_start(year: i32) -> Self {
        Self::new(year, 1, 1, 0, 0).expect("January 1st 00:00 is always valid")
    }

    /// Parse the `YYYY-MM-DDTHH:MM` wire form.
    pub fn parse(s: &str) -> Result<Self, DomainError> {
        NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M")
            .map(Self)
            .map_err(|_| DomainError::ParseTimestamp {
                input: s.to_owned(),
            })
    }

    pub fn year(&self) -> i32 {
        self.0.year()
    }

    /// Month 1–12.
    pub fn month(&self) -> u32 {
        self.0.month()
    }

    pub fn day(&self) -> u32 {
        self.0.day()
    }

    pub fn hour(&self) -> u32 {
        self.0.hour()
    }

    pub fn minute(&self) -> u32 {
        self.0.minute()
    }

    /// Minute of day, 0–1439.
    pub fn minute_of_day(&self) -> u32 {
        self.0.hour() * 60 + self.0.minute()
    }

    /// Day of week, 1–7 with Monday = 1.
    pub fn day_of_week(&self) -> u32 {
        self.0.weekday().number_from_monday()
    }

    /// Civil date of this instant.
    pub fn date(&self) -> NaiveDate {
        self.0.date()
    }

    /// The instant `minutes` later (or earlier when negative).
    pub fn plus_minutes(&self, minutes: i64) -> Self {
        Self(self.0 + Duration::minutes(minutes))
    }

    /// Ordinal minute index relative to `epoch` (negative before it).
    pub fn minutes_since(&self, epoch: MinuteInstant) -> i64 {
        minutes_between(&epoch, self)
    }

    /// Nanoseconds since the Unix epoch, reading the naive time as UTC.
    /// Used by the line-protocol sink.
    pub fn epoch_nanos(&self) -> i64 {
        self.0
            .and_utc()
            .timestamp_nanos_opt()
            .expect("minute-resolution timestamps fit in i64 nanoseconds")
    }
}

impl fmt::Display for MinuteInstant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0.format("%Y-%m-%dT%H:%M"))
    }
}

/// Signed whole-minute difference `b - a`.
pub fn minutes_between(a: &MinuteInstant, b: &MinuteInstant) -> i64 {
    (b.0 - a.0).num_minutes()
}

/// A half-open range of minutes `[start, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MinuteRange {
    start: MinuteInstant,
    end: MinuteInstant,
}

impl MinuteRange {
    pub fn new(start: MinuteInstant, end: MinuteInstant) -> Result<Self, DomainError> {
        if start >= end {
            return Err(DomainError::EmptyRange { start, end });
        }
        Ok(Self { start, end })
    }

    /// The plain calendar year `[Jan 1 00:00, next Jan 1 00:00)` —
    /// 525,600 minutes in a non-leap year.
    pub fn calendar_year(year: i32) -> Self {
        Self {
            start: MinuteInstant::year_start(year),
            end: MinuteInstant::year_start(year + 1),
        }
    }

    /// The endpoint-inclusive year span `[Jan 1 00:00, next Jan 1 00:00]`,
    /// i.e. one minute longer than [`Self::calendar_year`] — 525,601 minutes
    /// in a non-leap year. This is the evaluation span used by the test
    /// protocol.
    pub fn year_endpoint_inclusive(year: i32) -> Self {
        Self {
            start: MinuteInstant::year_start(year),
            end: MinuteInstant::year_start(year + 1).plus_minutes(1),
        }
    }

    pub fn start(&self) -> MinuteInstant {
        self.start
    }

    /// Exclusive end.
    pub fn end(&self) -> MinuteInstant {
        self.end
    }

    pub fn contains(&self, m: MinuteInstant) -> bool {
        self.start <= m && m < self.end
    }

    /// Number of minutes in the range.
    pub fn len(&self) -> u64 {
        minutes_between(&self.start, &self.end) as u64
    }

    pub fn is_empty(&self) -> bool {
        false // construction rejects empty ranges
    }

    /// Iterate every minute in the range in order.
    pub fn iter(&self) -> impl Iterator<Item = MinuteInstant> + '_ {
        let start = self.start;
        (0..self.len() as i64).map(move |i| start.plus_minutes(i))
    }
}

/// One plug-in interval at the station: `[start, start + duration_minutes)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChargeSession {
    start: MinuteInstant,
    duration_minutes: u32,
}

impl ChargeSession {
    pub fn new(start: MinuteInstant, duration_minutes: u32) -> Result<Self, DomainError> {
        if duration_minutes == 0 {
            return Err(DomainError::ZeroDuration);
        }
        Ok(Self {
            start,
            duration_minutes,
        })
    }

    pub fn start(&self) -> MinuteInstant {
        self.start
    }

    pub fn duration_minutes(&self) -> u32 {
        self.duration_minutes
    }

    /// Exclusive end minute.
    pub fn end(&self) -> MinuteInstant {
        self.start.plus_minutes(self.duration_minutes as i64)
    }

    /// Whether minute `m` falls inside the half-open session interval.
    pub fn covers(&self, m: MinuteInstant) -> bool {
        self.start <= m && m < self.end()
    }
}

/// One minute of ground truth: is the station occupied at `ts`?
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OccupancySample {
    pub ts: MinuteInstant,
    pub occupied: bool,
}

impl OccupancySample {
    pub fn new(ts: MinuteInstant, occupied: bool) -> Self {
        Self { ts, occupied }
    }

    /// The 0/1 label used by the model.
    pub fn label(&self) -> f64 {
        if self.occupied {
            1.0
        } else {
            0.0
        }
    }
}

/// Calendar context for day classification: festivity dates are treated as
/// non-working; the weekend convention is fixed to Saturday + Sunday.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CalendarContext {
    festivities: BTreeSet<NaiveDate>,
}

impl CalendarContext {
    /// Calendar with no festivities.
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn with_festivities<I: IntoIterator<Item = NaiveDate>>(dates: I) -> Self {
        Self {
            festivities: dates.into_iter().collect(),
        }
    }

    pub fn is_festivity(&self, date: NaiveDate) -> bool {
        self.festivities.contains(&date)
    }

    /// Monday–Friday.
    pub fn is_business_day(&self, date: NaiveDate) -> bool {
        date.weekday().number_from_monday() <= 5
    }

    /// Business day that is not a festivity.
    pub fn is_working_day(&self, date: NaiveDate) -> bool {
        self.is_business_day(date) && !self.is_festivity(date)
    }

    pub fn festivities(&self) -> impl Iterator<Item = &NaiveDate> {
        self.festivities.iter()
    }
}

/// Expand sessions into the per-minute occupancy grid over `range`.
///
/// Produces exactly one sample per minute; minute `m` is labeled occupied
/// iff some session covers it. Sessions may start before the range or end
/// after it — only the in-range portion is labeled. Input order does not
/// matter, but any pair of overlapping sessions is rejected.
pub fn sessions_to_labels(
    sessions: &[ChargeSession],
    range: &MinuteRange,
) -> Result<Vec<OccupancySample>, DomainError> {
    let mut sorted: Vec<ChargeSession> = sessions.to_vec();
    sorted.sort_by_key(|s| s.start);
    for pair in sorted.windows(2) {
        if pair[1].start < pair[0].end() {
            return Err(DomainError::OverlappingSessions {
                first_start: pair[0].start,
                first_duration: pair[0].duration_minutes,
                second_start: pair[1].start,
                second_duration: pair[1].duration_minutes,
            });
        }
    }

    let mut labels = Vec::with_capacity(range.len() as usize);
    let mut next = sorted
        .iter()
        .position(|s| s.end() > range.start())
        .unwrap_or(sorted.len());
    let mut active: Option<&ChargeSession> = None;
    for m in range.iter() {
        if let Some(s) = active {
            if m >= s.end() {
                active = None;
            }
        }
        if active.is_none() {
            while next < sorted.len() && sorted[next].end() <= m {
                next += 1;
            }
            if next < sorted.len() && sorted[next].covers(m) {
                active = Some(&sorted[next]);
                next += 1;
            }
        }
        labels.push(OccupancySample::new(m, active.is_some()));
    }
    Ok(labels)
}

/// Parse a `YYYY-MM-DD` civil date.
pub fn parse_date(s: &str) -> Result<NaiveDate, DomainError> {
    NaiveDate::parse_from_str(s, "%Y-%m-%d").map_err(|_| DomainError::ParseDate {
        input: s.to_owned(),
    })
}
