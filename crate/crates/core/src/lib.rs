//! Benchmark toolkit for machine unlearning in collaborative-filtering
//! recommenders.
//!
//! The crate bundles small matrix-factorization and graph recommenders with
//! exact analytic gradients and Hessian-vector products, seven approximate
//! unlearning algorithms, generators for sensitive-item and spam-removal
//! request sequences, and an evaluation harness that compares unlearned
//! models against models retrained from scratch on the retained data.
//!
//! Module map:
//!
//! - [`math`]: parameter storage, inverse-HVP solvers, clipping and noise.
//! - [`data`]: interaction logs, datasets, forget batches and retain sampling.
//! - [`models`]: BPR-MF, LightGCN and the count-based baselines.
//! - [`unlearn`]: the unlearning algorithms and the sequential request runner.
//! - [`scenarios`]: sensitive-item and spam request generators.
//! - [`eval`]: ranking metrics, effectiveness deltas and reports.
//! - [`harness`]: experiment configs, pipelines, artifacts and tables.

pub mod data;
pub mod error;
pub mod eval;
pub mod harness;
pub mod math;
pub mod models;
pub mod scenarios;
pub mod unlearn;

pub use error::{Error, Result};
