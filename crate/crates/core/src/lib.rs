//! WiFi connection set-up laboratory.
//!
//! The crate covers the full measurement-to-selection loop for WiFi
//! association latency:
//!
//! * [`log_schema`]: the connection-log record, its validation and JSONL/CSV I/O.
//! * [`sim`]: a discrete-event model of the set-up state machine
//!   (scan, associate, authenticate, DHCP) and seeded corpus generators.
//! * [`binning`]: the shared x/y binning contract.
//! * [`analytics`]: outcome proportions, CDFs, phase breakdowns, transition
//!   matrices, relative information gain and Kendall correlation.
//! * [`features`]: FAST/SLOW labeling and categorical encoding.
//! * [`forest`]: a weighted-Gini random forest with a versioned binary format.
//! * [`selection`]: ML-based AP selection, the strongest-signal baseline and
//!   the what-if replay evaluation.

pub mod analytics;
pub mod binning;
pub mod features;
pub mod forest;
pub mod log_schema;
pub mod selection;
pub mod sim;
pub mod stats;

mod seed;

pub use seed::sub_seed;

/// Time cost assigned to a failed attempt when scoring replayed selections.
pub const FAILURE_TIME_MS: u32 = 30_000;

/// Default connection timeout of a set-up process.
pub const DEFAULT_TIMEOUT_MS: u32 = 30_000;

/// Largest RSSI value the logs can carry; stronger readings are clamped.
pub const RSSI_CLAMP_DBM: i32 = -55;
