//! Lagged causal discovery and cause-effect synchronization for
//! channel-dependent time-series forecasting.
//!
//! The pipeline runs in stages, one module each:
//!
//! 1. [`synthgen`] draws random lagged linear structures and simulates them.
//! 2. [`granger`] scans every ordered variable pair over a lag range with
//!    nested-regression F-tests and keeps the most significant lag.
//! 3. [`graph`] thresholds the scans into a causal graph and exports it.
//! 4. [`sampler`] shifts each cause by its lag and cuts 3-channel
//!    context/horizon windows (effect, synchronized cause, raw cause).
//! 5. [`forecast`] trains channel-dependent forecasters on those windows.
//! 6. [`eval`] scores forecasts with MAPE and runs the end-to-end experiments.
//!
//! [`series`] and [`window`] hold the shared containers and arithmetic,
//! [`rng`] the seeding scheme every stochastic stage draws from.

pub mod error;
pub mod eval;
pub mod forecast;
pub mod granger;
pub mod graph;
pub mod rng;
pub mod sampler;
pub mod series;
pub mod synthgen;
pub mod window;

pub use error::{Error, Result};
pub use series::TimeSeriesMatrix;
pub use window::WindowSpec;
