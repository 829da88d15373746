//! Retraining-aware evaluation harness for global time-series forecasting models.
//!
//! The pipeline loads a long-format panel, builds pooled supervised features,
//! fits global learners under a rolling-origin schedule where parameters are
//! re-estimated every `r` observations, wraps point forecasts with conformal
//! quantiles, combines members into ensembles, scores everything with scaled
//! metrics, and converts computing time into money.

pub mod backtest;
pub mod cli;
pub mod conformal;
pub mod cost;
pub mod ensemble;
pub mod error;
pub mod features;
pub mod metrics;
pub mod models;
pub mod panel;
pub mod stats;
pub mod synthetic;

pub use error::{HarnessError, Result};
