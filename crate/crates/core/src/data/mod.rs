//! Interaction-log ingestion, indexing, train/test splitting, forget-batch
//! bookkeeping and per-step retain sampling.

mod dataset;
mod forget;
mod log;
pub mod synthetic;

pub use dataset::{build_dataset, Dataset, Interaction, InteractionId, Split};
pub use forget::{apply_forget, sample_retain, ForgetBatch, RetainSample};
pub use log::{load_interactions, parse_tsv, InteractionLog, LogFormat, RawInteraction, TSV_HEADER};

/// Default share of the original training interactions a retain sample may use.
pub const DEFAULT_RETAIN_FRAC_CAP: f64 = 0.05;
