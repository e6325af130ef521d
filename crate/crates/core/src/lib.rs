//! Lifetime probability-of-default term structures from rating transition
//! matrices driven by macroeconomic scenarios.
//!
//! The engine estimates a through-the-cycle transition matrix from migration
//! counts, tilts it into point-in-time matrices with a logit macro overlay,
//! and propagates rating distributions to cumulative PD term structures.
//! The macro driver can be consumed raw, smoothed by a naive Kalman filter,
//! or filtered with a stacked anchored observation model that pulls estimates
//! toward a neutral long-run level and pins them there beyond the forecast
//! window. A Monte Carlo harness compares the three methods across stylised
//! scenarios.

pub mod config;
pub mod error;
pub mod experiment;
pub mod filter;
pub mod macroecon;
pub mod numeric;
pub mod propagation;
pub mod ratings;

pub use error::{Error, Result};
