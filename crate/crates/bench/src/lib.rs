//! Benchmark-only crate; see `benches/hot_paths.rs`.
//!
//! Shared helpers for building realistic inputs at year scale.

use chargecast_core::datagen::{default_config, generate};
use chargecast_core::domain::{sessions_to_labels, CalendarContext, MinuteRange, OccupancySample};
use chargecast_core::featurize::encode;
use chargecast_core::model::LabeledMinute;

/// One labeled test year from the default dataset.
pub fn labeled_year(year: i32) -> Vec<OccupancySample> {
    let data = generate(&default_config()).expect("default config generates");
    sessions_to_labels(&data.sessions, &MinuteRange::year_endpoint_inclusive(year))
        .expect("generated sessions never overlap")
}

/// Encode labels into model inputs.
pub fn encoded(labels: &[OccupancySample]) -> Vec<LabeledMinute> {
    let cal = CalendarContext::empty();
    labels
        .iter()
        .map(|s| (encode(&s.ts, &cal), s.occupied))
        .collect()
}
