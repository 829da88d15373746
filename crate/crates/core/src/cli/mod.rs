//! Config-driven orchestration: one TOML file describes a whole run, and the
//! `retrain` binary only picks the file, an output override and verbosity.

pub mod config;
pub mod report;
pub mod run;

pub use config::RunConfig;
pub use report::{build_report, Report, ReportSettings};
pub use run::{execute, run, ErrorSummary, RunSummary};
