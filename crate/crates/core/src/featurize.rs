//! Calendar feature encoding.
//!
//! A minute of civil time becomes a 13-dimensional vector:
//!
//! ```text
//! [hour_sin, hour_cos, month_sin, month_cos,
//!  is_business_day, is_working_day,
//!  dow_mon, dow_tue, dow_wed, dow_thu, dow_fri, dow_sat, dow_sun]
//! ```
//!
//! The hour pair is computed from the minute of day (period 1440 rather
//! than 24) so the encoding varies smoothly within the hour and is
//! continuous across midnight. The month pair puts January at angle zero.

use std::f64::consts::TAU;
use std::fmt;

use thiserror::Error;

use crate::domain::{parse_date, CalendarContext, DomainError, MinuteInstant};

/// Dimensionality of the model input.
pub const FEATURE_DIM: usize = 13;

/// Feature names in vector order.
pub const FEATURE_NAMES: [&str; FEATURE_DIM] = [
    "hour_sin",
    "hour_cos",
    "month_sin",
    "month_cos",
    "is_business_day",
    "is_working_day",
    "dow_mon",
    "dow_tue",
    "dow_wed",
    "dow_thu",
    "dow_fri",
    "dow_sat",
    "dow_sun",
];

#[derive(Debug, Error)]
pub enum FeaturizeError {
    #[error("minute of day {0} outside 0..=1439")]
    MinuteOutOfRange(u32),
    #[error("month {0} outside 1..=12")]
    MonthOutOfRange(u32),
    #[error("festivity calendar line {line}: {source}")]
    BadCalendarLine {
        line: usize,
        #[source]
        source: DomainError,
    },
}

/// The model input vector. Fixed at [`FEATURE_DIM`] entries in the order
/// given by [`FEATURE_NAMES`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector([f64; FEATURE_DIM]);

impl FeatureVector {
    pub fn from_values(values: [f64; FEATURE_DIM]) -> Self {
        Self(values)
    }

    pub fn values(&self) -> &[f64; FEATURE_DIM] {
        &self.0
    }
}

impl fmt::Display for FeatureVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "[")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "]")
    }
}

/// Cyclical encoding of the minute of day over a 1440-minute period.
pub fn encode_hour(minute_of_day: u32) -> Result<(f64, f64), FeaturizeError> {
    if minute_of_day > 1439 {
        return Err(FeaturizeError::MinuteOutOfRange(minute_of_day));
    }
    let angle = TAU * minute_of_day as f64 / 1440.0;
    Ok((angle.sin(), angle.cos()))
}

/// Cyclical encoding of the month over a 12-month period, January at angle 0.
pub fn encode_month(month: u32) -> Result<(f64, f64), FeaturizeError> {
    if !(1..=12).contains(&month) {
        return Err(FeaturizeError::MonthOutOfRange(month));
    }
    let angle = TAU * (month - 1) as f64 / 12.0;
    Ok((angle.sin(), angle.cos()))
}

/// Encode a minute into the full feature vector.
///
/// `is_business_day` is 1 on Monday–Friday; `is_working_day` additionally
/// requires the date not to be listed as a festivity in `cal`. Exactly one
/// `dow_*` entry is set.
pub fn encode(ts: &MinuteInstant, cal: &CalendarContext) -> FeatureVector {
    // A MinuteInstant is valid by construction, so the sub-encoders cannot fail.
    let (hour_sin, hour_cos) =
        encode_hour(ts.minute_of_day()).expect("minute_of_day is always 0..=1439");
    let (month_sin, month_cos) = encode_month(ts.month()).expect("month is always 1..=12");
    let date = ts.date();
    let business = cal.is_business_day(date);
    let working = cal.is_working_day(date);

    let mut values = [0.0; FEATURE_DIM];
    values[0] = hour_sin;
    values[1] = hour_cos;
    values[2] = month_sin;
    values[3] = month_cos;
    values[4] = business as u8 as f64;
    values[5] = working as u8 as f64;
    values[6 + (ts.day_of_week() - 1) as usize] = 1.0;
    FeatureVector(values)
}

/// Parse a festivity calendar: one `YYYY-MM-DD` date per line, blank lines
/// and `#` comments allowed.
pub fn parse_festivity_calendar(text: &str) -> Result<CalendarContext, FeaturizeError> {
    let mut dates = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let date = parse_date(line).map_err(|source| FeaturizeError::BadCalendarLine {
            line: idx + 1,
            source,
        })?;
        dates.push(date);
    }
    Ok(CalendarContext::with_festivities(dates))
}
