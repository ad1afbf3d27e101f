//! Experiment orchestration: config files, the per-seed pipeline, artifact
//! files and aggregate tables.

mod config;
mod pipeline;
mod table;

pub use config::{parse_config, DatasetSection, ExperimentConfig, ModelSection, RunSection, ScenarioSection, SplitKind};
pub use pipeline::{
    collect_reports, evaluate_stage, guard, prepare, read_report, retrain_stage, run_experiment, run_seed, table_paths,
    train_stage, unlearn_stage, unlearned_checkpoint, write_checkpoint, write_file, write_report, write_requests,
    Prepared, RunArtifacts, EXIT_CONFIG, EXIT_HALTED, RunOptions, SeedArtifacts, SeedPaths, SeedRun,
};
pub use table::{aggregate, columns, common_ks, emit_table, parse_table_csv, MeanStd, TableFormat, TableRow};
