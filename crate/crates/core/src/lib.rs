//! Streaming occupancy forecasting for a single EV charging station.
//!
//! The crate covers the full experiment loop:
//!
//! - [`domain`] — minute-resolution time types, charge sessions, occupancy labels;
//! - [`datagen`] — a seeded synthetic session generator calibrated to a real
//!   charging-station corpus, with regime-shift scenarios;
//! - [`featurize`] — the 13-dimensional calendar encoding fed to the model;
//! - [`model`] — logistic regression with batch initialization and incremental
//!   streaming updates;
//! - [`stream`] — an in-process topic log with offset-tracking consumers, a
//!   minute-stream replayer, and an NDJSON-over-TCP front;
//! - [`pipeline`] — the live loop: consume, update, forecast 15 minutes ahead,
//!   resolve forecasts against ground truth;
//! - [`eval`] — precision/recall/F1 over a threshold grid, streaming-vs-batch
//!   comparison tables.

pub mod datagen;
pub mod domain;
pub mod eval;
pub mod featurize;
pub mod model;
pub mod pipeline;
pub mod stream;

pub use domain::{
    CalendarContext, ChargeSession, DomainError, MinuteInstant, MinuteRange, OccupancySample,
};
pub use featurize::{FeatureVector, FEATURE_DIM};
pub use model::{ModelState, TrainConfig};
