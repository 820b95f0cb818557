//! Trace-driven, multi-level workload characterization.
//!
//! The crate follows an observe / reference / fuse / explore loop:
//!
//! * [`refgen`] builds synthetic reference workloads whose locality has a
//!   closed-form prediction.
//! * [`metrics`] measures instruction and data reuse distance and linear
//!   branch entropy on any [`trace::Trace`], and converts hardware counter
//!   records into MPKI.
//! * [`sim`] provides a desk-scale microarchitecture level: set-associative
//!   L1 caches, a bimodal predictor, and working-set knee detection.
//! * [`fusion`] turns per-level observations into normalized impact factors
//!   and component breakdown trees.
//! * [`store`] keeps observations on disk between pipeline steps.
//!
//! Batch work (sweeps, seed averaging, calibration) runs on rayon when the
//! `parallel` feature is enabled and falls back to plain iteration otherwise.

pub mod exec;
pub mod fusion;
pub mod metrics;
pub mod refgen;
pub mod rng;
pub mod sim;
pub mod store;
pub mod trace;

pub use exec::Exec;
pub use trace::{EventKind, Level, Trace, TraceEvent};

/// Crate version, stamped into reports.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
