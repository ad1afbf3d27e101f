//! Approximate unlearning algorithms and the sequential request runner.
//!
//! Step functions take the current model plus sample sets and return a
//! [`StepOutcome`]; they never mutate their input. [`run_sequence`] chains
//! them over a list of forget batches.

mod common;
mod config;
mod fanchuan;
mod gif;
mod influence;
mod kookmin;
mod outcome;
mod runner;
mod seif;

pub use common::StepContext;
pub use config::{AlgoConfig, Algorithm, DivergencePolicy, GraphPolicy, ParamScope};
pub use fanchuan::{fanchuan_step, kl_to_uniform, ShuffledPool};
pub use gif::{gif_nodes, gif_step};
pub use influence::{ceu_step, idea_required_sigma, idea_step, scif_step};
pub use kookmin::{kookmin_reset_count, kookmin_select, kookmin_step};
pub use outcome::{Diagnostics, SolverSummary, StepOutcome, StepStatus};
pub use runner::{combined_status, parse_jsonl, run_sequence, step_seed, RunHooks, StepRecord, Trajectory, TrajectoryStep};
pub use seif::seif_step;
