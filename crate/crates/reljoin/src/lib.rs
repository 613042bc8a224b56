//! Cost-based selection of distributed join methods, plus a deterministic
//! single-process simulator that executes physical plans and meters the
//! cluster workload (network bytes and compute units) they would generate.
//!
//! The crate is organized around a simple pipeline:
//!
//! * [`plan`] — logical/physical plan trees, JSON (de)serialization, stage
//!   segmentation at exchange boundaries.
//! * [`stats`] — dataset statistics, watermark validity, static propagation.
//! * [`cost`] — the per-method workload formulas and the relative-size
//!   threshold `k0` that separates broadcast-hash from shuffle-hash plans.
//! * [`selector`] — feasibility gates and the equi/non-equi selection rules.
//! * [`strategies`] — pluggable selection strategies (forced methods, the
//!   absolute-size rule, and the relative-size selector).
//! * [`simulator`] — synthetic dataset generation and plan execution with
//!   full workload accounting.
//! * [`optimizer`] — static physical planning and the adaptive re-selection
//!   loop driven by runtime statistics measured at exchanges.
//! * [`bench`] — multi-strategy suite runner and strategy comparison reports.

pub mod bench;
pub mod cli;
pub mod cost;
pub mod error;
pub mod json;
pub mod optimizer;
pub mod plan;
pub mod selector;
pub mod simulator;
pub mod stats;
pub mod strategies;

pub use error::{Error, Result};
