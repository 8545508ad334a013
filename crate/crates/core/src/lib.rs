//! Analytical and simulated performance metrics for a two-lane vehicular
//! scenario in which every vehicle and smart traffic light carries a
//! dual-function radar-communication transceiver.
//!
//! The typical vehicle detects the next vehicle ahead (radar) while decoding
//! the nearest traffic light (communication). Oncoming vehicles form a
//! Poisson field of Rician-faded interferers. Metrics are expressed as
//! expectations over the desired-link powers of the interference CDF, which
//! is recovered from its Laplace transform by Gil-Pelaez inversion and
//! cross-checked by an independent Monte-Carlo simulator.
//!
//! Module map:
//!
//! - [`scenario`]: parameters, validation, derived link constants, JSON config.
//! - [`distributions`]: desired-link distance/power laws and region-restricted
//!   expectations.
//! - [`interference`]: fading and interference Laplace transforms, inversion,
//!   tabulated interference CDF.
//! - [`cancellation`]: residual-interference models.
//! - [`metrics`]: coverage, false alarm, detection, success, joint and
//!   conditional metrics, spectral efficiency.
//! - [`montecarlo`]: simulation oracle.
//! - [`optimize`]: power optimization of the joint success/coverage metric.
//! - [`report`]: CSV/JSON rows shared by the command-line front end.

pub mod cancellation;
pub mod distributions;
pub mod error;
pub mod interference;
pub mod metrics;
pub mod montecarlo;
pub mod optimize;
pub mod quad;
pub mod report;
pub mod scenario;
pub mod units;

pub use error::{Error, Result};
