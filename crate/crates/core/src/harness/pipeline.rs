//! The per-seed experiment pipeline and its artifacts.
//!
//! Every stage is a plain function of the config, the seed and the outputs
//! of earlier stages, so the CLI can run them one at a time and `run` can
//! chain them in memory.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::table::{emit_table, TableFormat};
use crate::data::{apply_forget, Dataset, ForgetBatch};
use crate::error::{Error, Result};
use crate::eval::{build_report, with_eval_threads, MetricsReport, ReportInput, SensitiveTarget, Timing, UnlearnedRun};
use crate::math::{name_hash, rng_from};
use crate::models::{save_checkpoint, train, Checkpoint, Provenance};
use crate::scenarios::{
    batch_spam_requests, gen_sensitive_requests, gen_spam_attack, save_requests, ScenarioKind, UnlearnRequestSequence,
};
use crate::unlearn::{run_sequence, RunHooks, StepRecord, Trajectory};

/// Exit code for configuration errors.
pub const EXIT_CONFIG: u8 = 2;
/// Exit code when unlearning diverged under the halt policy.
pub const EXIT_HALTED: u8 = 3;

/// The scenario applied to the base dataset for one seed.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub scenario: ScenarioKind,
    /// What the model is trained on: the base data, or the poisoned data
    /// under the spam scenario.
    pub training: Dataset,
    pub requests: UnlearnRequestSequence,
    /// Test lists for utility.
    pub test: Vec<Vec<u32>>,
    /// Affected users and sensitive items under the sensitive scenario.
    pub sensitive: Option<(BTreeSet<u32>, BTreeSet<u32>)>,
    /// Promoted items under the spam scenario.
    pub spam_targets: Vec<u32>,
}

impl Prepared {
    /// The training data with every request removed.
    pub fn retained(&self) -> Result<Dataset> {
        let all: Vec<_> = self.requests.batches().iter().flat_map(|b| b.interactions().iter().copied()).collect();
        apply_forget(&self.training, &ForgetBatch::new(all))
    }
}

/// Generates the scenario for `seed`. Deterministic in `(cfg, base, seed)`.
pub fn prepare(cfg: &ExperimentConfig, base: &Dataset, seed: u64) -> Result<Prepared> {
    let mut rng = rng_from(&[seed, name_hash("scenario")]);
    match cfg.scenario.kind {
        ScenarioKind::Sensitive => {
            let s = gen_sensitive_requests(base, base.sensitive_categories(), cfg.scenario.budget_fraction, &mut rng)?;
            let affected = s.affected_set();
            Ok(Prepared {
                scenario: ScenarioKind::Sensitive,
                training: base.clone(),
                requests: s.requests,
                test: s.scrubbed_test,
                sensitive: Some((affected, s.sensitive_items)),
                spam_targets: Vec::new(),
            })
        }
        ScenarioKind::Spam => {
            let s = gen_spam_attack(base, &cfg.scenario.spam(), &mut rng)?;
            let requests = batch_spam_requests(&s, cfg.scenario.batch_size, &mut rng)?;
            Ok(Prepared {
                scenario: ScenarioKind::Spam,
                test: s.poisoned_dataset.test().to_vec(),
                training: s.poisoned_dataset,
                requests,
                sensitive: None,
                spam_targets: s.target_items,
            })
        }
    }
}

pub fn train_stage(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> Result<Checkpoint> {
    train(cfg.model.kind, &prep.training, &cfg.model.hyper(), cfg.model.epochs, seed)
}

/// Trains the reference model on the fully retained data. The wall clock
/// is in the checkpoint's provenance.
pub fn retrain_stage(cfg: &ExperimentConfig, prep: &Prepared, seed: u64) -> Result<Checkpoint> {
    train(cfg.model.kind, &prep.retained()?, &cfg.model.hyper(), cfg.model.epochs, seed)
}

pub fn unlearn_stage(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    trained: &Checkpoint,
    seed: u64,
    hooks: &RunHooks,
) -> Result<Trajectory> {
    let model = trained.bind(&prep.training)?;
    run_sequence(&model, &prep.training, prep.requests.batches(), &cfg.unlearn, cfg.run.policy, seed, hooks)
}

/// Checkpoint of a trajectory's final model.
pub fn unlearned_checkpoint(trained: &Checkpoint, trajectory: &Trajectory) -> Checkpoint {
    trajectory.final_model.to_checkpoint(
        Provenance {
            trained_on: trained.provenance.trained_on.clone(),
            steps_applied: trajectory.len(),
            wall_clock_train: trained.provenance.wall_clock_train,
        },
        trained.epoch_losses.clone(),
    )
}

/// Compares the unlearned model with the retrained one. Both are bound to
/// the fully retained data, which must be what `retrained` was trained on.
pub fn evaluate_stage(
    cfg: &ExperimentConfig,
    prep: &Prepared,
    records: &[StepRecord],
    unlearned: &Checkpoint,
    retrained: &Checkpoint,
    seed: u64,
) -> Result<MetricsReport> {
    let retained = prep.retained()?;
    if retrained.provenance.trained_on != retained.digest() {
        return Err(Error::contract("the retrained checkpoint was not trained on the retained data"));
    }
    let unlearned_model = unlearned.bind(&retained)?;
    let retrained_model = retrained.bind(&retained)?;
    let sensitive = prep.sensitive.as_ref().map(|(users, items)| SensitiveTarget { users, items });
    with_eval_threads(|| {
        build_report(&ReportInput {
            run: UnlearnedRun {
                algorithm: cfg.unlearn.algorithm,
                records,
                model: &unlearned_model,
                dataset: &retained,
            },
            retrained: &retrained_model,
            test: &prep.test,
            sensitive,
            scenario: Some(prep.scenario),
            retrain_seconds: retrained.provenance.wall_clock_train,
            ks: &cfg.run.ks,
            seed,
        })
    })
}

/// File names for one seed: `<digest>_s<seed>_<class>`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SeedPaths {
    dir: PathBuf,
    stem: String,
}

impl SeedPaths {
    pub fn new(dir: &Path, digest: &str, seed: u64) -> Self {
        Self {
            dir: dir.to_path_buf(),
            stem: format!("{digest}_s{seed}"),
        }
    }

    fn file(&self, class: &str) -> PathBuf {
        self.dir.join(format!("{}_{class}", self.stem))
    }

    pub fn trained(&self) -> PathBuf {
        self.file("trained.ckpt")
    }

    pub fn retrained(&self) -> PathBuf {
        self.file("retrained.ckpt")
    }

    pub fn unlearned(&self) -> PathBuf {
        self.file("unlearned.ckpt")
    }

    pub fn steps(&self) -> PathBuf {
        self.file("steps.jsonl")
    }

    /// Metrics without timing; deterministic in `(config, seed)`.
    pub fn report(&self) -> PathBuf {
        self.file("report.json")
    }

    pub fn timing(&self) -> PathBuf {
        self.file("timing.json")
    }

    pub fn requests(&self) -> PathBuf {
        self.file("requests")
    }

    pub fn all(&self) -> Vec<PathBuf> {
        vec![
            self.trained(),
            self.retrained(),
            self.unlearned(),
            self.steps(),
            self.report(),
            self.timing(),
            self.requests(),
        ]
    }
}

/// Aggregate table paths for an experiment digest.
pub fn table_paths(dir: &Path, digest: &str) -> (PathBuf, PathBuf) {
    (dir.join(format!("{digest}_table.txt")), dir.join(format!("{digest}_table.csv")))
}

/// Refuses to touch an existing path unless `force`.
pub fn guard(path: &Path, force: bool) -> Result<()> {
    if !force && path.exists() {
        return Err(Error::ArtifactExists(path.to_path_buf()));
    }
    Ok(())
}

pub fn write_file(path: &Path, contents: &[u8], force: bool) -> Result<()> {
    guard(path, force)?;
    std::fs::write(path, contents).map_err(|e| Error::io(path, e))
}

pub fn write_checkpoint(path: &Path, ck: &Checkpoint, force: bool) -> Result<()> {
    guard(path, force)?;
    save_checkpoint(ck, path)
}

pub fn write_requests(dir: &Path, dataset: &Dataset, requests: &UnlearnRequestSequence, force: bool) -> Result<()> {
    guard(dir, force)?;
    if dir.exists() {
        std::fs::remove_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    save_requests(dir, dataset, requests).map(|_| ())
}

#[derive(Serialize, Deserialize)]
struct TimingFile {
    seed: u64,
    timing: Timing,
}

/// Writes the report as two files: the metrics, which reproduce exactly,
/// and the wall-clock timing, which does not.
pub fn write_report(paths: &SeedPaths, report: &MetricsReport, force: bool) -> Result<()> {
    let mut value = serde_json::to_value(report)?;
    if let serde_json::Value::Object(map) = &mut value {
        map.remove("timing");
    }
    let mut body = serde_json::to_string_pretty(&value)?;
    body.push('\n');
    write_file(&paths.report(), body.as_bytes(), force)?;
    let mut timing = serde_json::to_string_pretty(&TimingFile {
        seed: report.seed,
        timing: report.timing.clone(),
    })?;
    timing.push('\n');
    write_file(&paths.timing(), timing.as_bytes(), force)
}

/// Reads a report written by [`write_report`].
pub fn read_report(report_path: &Path, timing_path: &Path) -> Result<MetricsReport> {
    let read = |p: &Path| std::fs::read_to_string(p).map_err(|e| Error::io(p, e));
    let mut value: serde_json::Value = serde_json::from_str(&read(report_path)?)?;
    let timing: TimingFile = serde_json::from_str(&read(timing_path)?)?;
    if let serde_json::Value::Object(map) = &mut value {
        map.insert("timing".into(), serde_json::to_value(timing.timing)?);
    }
    Ok(serde_json::from_value(value)?)
}

/// Every report in `dir`, ordered by file name.
pub fn collect_reports(dir: &Path) -> Result<Vec<MetricsReport>> {
    let mut names: Vec<PathBuf> = std::fs::read_dir(dir)
        .map_err(|e| Error::io(dir, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.file_name().and_then(|n| n.to_str()).is_some_and(|n| n.ends_with("_report.json")))
        .collect();
    names.sort();
    names
        .iter()
        .map(|p| {
            let name = p.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            let timing = p.with_file_name(name.replace("_report.json", "_timing.json"));
            read_report(p, &timing)
        })
        .collect()
}

#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub paths: SeedPaths,
    pub report: MetricsReport,
    /// The halt policy stopped the sequence at a diverged step.
    pub halted: bool,
}

#[derive(Debug, Clone)]
pub struct SeedRun {
    pub seed: u64,
    /// The error message of a failed seed.
    pub result: std::result::Result<SeedArtifacts, String>,
}

#[derive(Debug, Clone)]
pub struct RunArtifacts {
    pub digest: String,
    pub out_dir: PathBuf,
    pub config: PathBuf,
    pub seeds: Vec<SeedRun>,
    /// Text and CSV tables over the successful seeds; absent if none
    /// succeeded.
    pub tables: Option<(PathBuf, PathBuf)>,
}

impl RunArtifacts {
    pub fn reports(&self) -> Vec<&MetricsReport> {
        self.seeds.iter().filter_map(|s| s.result.as_ref().ok().map(|a| &a.report)).collect()
    }

    pub fn any_halted(&self) -> bool {
        self.seeds.iter().any(|s| s.result.as_ref().is_ok_and(|a| a.halted))
    }

    /// Process exit code: [`EXIT_HALTED`] if the halt policy stopped any
    /// seed, 1 if a seed failed, otherwise 0.
    pub fn exit_code(&self) -> u8 {
        if self.any_halted() {
            EXIT_HALTED
        } else if self.failures().is_empty() {
            0
        } else {
            1
        }
    }

    pub fn failures(&self) -> Vec<(u64, &str)> {
        self.seeds.iter().filter_map(|s| s.result.as_ref().err().map(|e| (s.seed, e.as_str()))).collect()
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RunOptions {
    pub force: bool,
    pub hooks: RunHooks,
}

/// Train, scenario, retrain, unlearn, evaluate and write every artifact for
/// one seed.
pub fn run_seed(
    cfg: &ExperimentConfig,
    base: &Dataset,
    paths: &SeedPaths,
    seed: u64,
    opts: &RunOptions,
) -> Result<SeedArtifacts> {
    let prep = prepare(cfg, base, seed)?;
    write_requests(&paths.requests(), &prep.training, &prep.requests, opts.force)?;
    let trained = train_stage(cfg, &prep, seed)?;
    write_checkpoint(&paths.trained(), &trained, opts.force)?;
    let retrained = retrain_stage(cfg, &prep, seed)?;
    write_checkpoint(&paths.retrained(), &retrained, opts.force)?;

    let trajectory = unlearn_stage(cfg, &prep, &trained, seed, &opts.hooks)?;
    if !trajectory.halted && trajectory.final_dataset.digest() != retrained.provenance.trained_on {
        return Err(Error::contract("final retained data differs from the retraining data"));
    }
    let unlearned = unlearned_checkpoint(&trained, &trajectory);
    write_checkpoint(&paths.unlearned(), &unlearned, opts.force)?;
    write_file(&paths.steps(), trajectory.to_jsonl()?.as_bytes(), opts.force)?;

    let records = trajectory.records();
    let report = evaluate_stage(cfg, &prep, &records, &unlearned, &retrained, seed)?;
    write_report(paths, &report, opts.force)?;
    Ok(SeedArtifacts {
        paths: paths.clone(),
        report,
        halted: trajectory.halted,
    })
}

/// Runs every seed of `cfg` in order. A failing seed is recorded and the
/// remaining seeds still run. Nothing is overwritten unless `opts.force`.
pub fn run_experiment(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunArtifacts> {
    cfg.validate()?;
    let base = cfg.dataset.load()?;
    let digest = cfg.digest(&base)?;
    let dir = &cfg.run.out_dir;
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;

    let config_path = dir.join(format!("{digest}_config.toml"));
    let (text_path, csv_path) = table_paths(dir, &digest);
    let mut planned = vec![config_path.clone(), text_path.clone(), csv_path.clone()];
    for &seed in &cfg.run.seeds {
        planned.extend(SeedPaths::new(dir, &digest, seed).all());
    }
    for p in &planned {
        guard(p, opts.force)?;
    }
    write_file(&config_path, cfg.to_toml_string()?.as_bytes(), opts.force)?;

    let seeds: Vec<SeedRun> = cfg
        .run
        .seeds
        .iter()
        .map(|&seed| SeedRun {
            seed,
            result: run_seed(cfg, &base, &SeedPaths::new(dir, &digest, seed), seed, opts).map_err(|e| e.to_string()),
        })
        .collect();

    let reports: Vec<MetricsReport> = seeds.iter().filter_map(|s| s.result.as_ref().ok().map(|a| a.report.clone())).collect();
    let tables = if reports.is_empty() {
        None
    } else {
        write_file(&text_path, emit_table(&reports, TableFormat::Text)?.as_bytes(), opts.force)?;
        write_file(&csv_path, emit_table(&reports, TableFormat::Csv)?.as_bytes(), opts.force)?;
        Some((text_path, csv_path))
    };
    Ok(RunArtifacts {
        digest,
        out_dir: dir.clone(),
        config: config_path,
        seeds,
        tables,
    })
}
