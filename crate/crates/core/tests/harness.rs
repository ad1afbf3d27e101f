use std::path::Path;

use erasebench::data::synthetic::SyntheticConfig;
use erasebench::eval::{KMetrics, MetricsReport, RankingMetrics, Timing};
use erasebench::harness::{
    aggregate, collect_reports, columns, emit_table, parse_table_csv, run_experiment, ExperimentConfig, RunOptions,
    SeedPaths, TableFormat,
};
use erasebench::models::{load_checkpoint, ModelKind};
use erasebench::scenarios::ScenarioKind;
use erasebench::unlearn::{parse_jsonl, Algorithm, DivergencePolicy, RunHooks, StepStatus};
use erasebench::Error;

fn config(out: &Path, algorithm: Algorithm, seeds: Vec<u64>) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.dataset.synthetic = Some(SyntheticConfig {
        users: 60,
        items: 40,
        clusters: 4,
        min_per_user: 6,
        max_per_user: 12,
        seed: 3,
        ..Default::default()
    });
    cfg.dataset.sensitive_categories = vec!["cat0".into()];
    cfg.model.embedding_dim = 6;
    cfg.model.epochs = 4;
    cfg.model.batch_size = 64;
    cfg.scenario.budget_fraction = 0.02;
    cfg.unlearn.algorithm = algorithm;
    cfg.run.seeds = seeds;
    cfg.run.out_dir = out.to_path_buf();
    cfg
}

fn digest(cfg: &ExperimentConfig) -> String {
    cfg.digest(&cfg.dataset.load().unwrap()).unwrap()
}

#[test]
fn single_seed_writes_each_artifact_once() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Algorithm::Scif, vec![1]);
    let run = run_experiment(&cfg, &RunOptions::default()).unwrap();
    assert!(run.failures().is_empty(), "{:?}", run.failures());
    let paths = SeedPaths::new(dir.path(), &run.digest, 1);
    for p in paths.all() {
        assert!(p.exists(), "{}", p.display());
        if p.is_file() {
            assert!(std::fs::metadata(&p).unwrap().len() > 0, "{}", p.display());
        }
    }
    for suffix in ["_trained.ckpt", "_retrained.ckpt", "_unlearned.ckpt"] {
        let n = std::fs::read_dir(dir.path())
            .unwrap()
            .filter(|e| e.as_ref().unwrap().file_name().to_string_lossy().ends_with(suffix))
            .count();
        assert_eq!(n, 1, "{suffix}");
    }
    let (text, csv) = run.tables.clone().unwrap();
    assert!(std::fs::read_to_string(text).unwrap().contains("scif"));
    assert!(!std::fs::read_to_string(csv).unwrap().is_empty());

    let report = &run.reports()[0];
    assert_eq!(report.scenario, Some(ScenarioKind::Sensitive));
    assert!(report.requests > 0);
    let records = parse_jsonl(&std::fs::read_to_string(paths.steps()).unwrap()).unwrap();
    assert_eq!(records.len(), report.requests);

    // retrained on exactly the retained data, unlearned model has every step applied
    let retrained = load_checkpoint(&paths.retrained()).unwrap();
    let trained = load_checkpoint(&paths.trained()).unwrap();
    assert_ne!(retrained.provenance.trained_on, trained.provenance.trained_on);
    assert_eq!(load_checkpoint(&paths.unlearned()).unwrap().provenance.steps_applied, report.requests);

    let back = collect_reports(dir.path()).unwrap();
    assert_eq!(back, vec![(*report).clone()]);
}

#[test]
fn rerun_refuses_to_overwrite_and_reproduces() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let cfg_a = config(a.path(), Algorithm::Ceu, vec![2]);
    let run_a = run_experiment(&cfg_a, &RunOptions::default()).unwrap();
    let err = run_experiment(&cfg_a, &RunOptions::default()).unwrap_err();
    assert!(matches!(err, Error::ArtifactExists(_)), "{err}");
    run_experiment(
        &cfg_a,
        &RunOptions {
            force: true,
            ..Default::default()
        },
    )
    .unwrap();

    let cfg_b = config(b.path(), Algorithm::Ceu, vec![2]);
    let run_b = run_experiment(&cfg_b, &RunOptions::default()).unwrap();
    assert_eq!(run_a.digest, run_b.digest);
    let pa = SeedPaths::new(a.path(), &run_a.digest, 2);
    let pb = SeedPaths::new(b.path(), &run_b.digest, 2);
    assert_eq!(std::fs::read(pa.report()).unwrap(), std::fs::read(pb.report()).unwrap());
    assert_eq!(load_checkpoint(&pa.unlearned()).unwrap().params, load_checkpoint(&pb.unlearned()).unwrap().params);
    let strip = |p: &Path| {
        let mut r = parse_jsonl(&std::fs::read_to_string(p).unwrap()).unwrap();
        r.iter_mut().for_each(|x| x.wall_clock_seconds = 0.0);
        r
    };
    assert_eq!(strip(&pa.steps()), strip(&pb.steps()));
}

#[test]
fn failing_seed_does_not_abort_the_others() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path(), Algorithm::Seif, vec![1, 2, 3]);
    let digest = digest(&cfg);
    // a plain file where seed 2's request directory should go
    std::fs::write(SeedPaths::new(dir.path(), &digest, 2).requests(), "x").unwrap();
    let run = run_experiment(
        &cfg,
        &RunOptions {
            force: true,
            ..Default::default()
        },
    )
    .unwrap();
    let failed: Vec<u64> = run.failures().iter().map(|(s, _)| *s).collect();
    assert_eq!(failed, vec![2]);
    assert_eq!(run.reports().len(), 2);
    let csv = std::fs::read_to_string(run.tables.unwrap().1).unwrap();
    let (_, rows) = parse_table_csv(&csv).unwrap();
    assert_eq!(rows[0].seeds, 2);
}

#[test]
fn halt_policy_marks_the_run() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path(), Algorithm::Scif, vec![1]);
    cfg.run.policy = DivergencePolicy::HaltOnDiverge;
    let run = run_experiment(
        &cfg,
        &RunOptions {
            force: false,
            hooks: RunHooks { nan_at: Some((0, 1)) },
        },
    )
    .unwrap();
    assert!(run.any_halted());
    let report = &run.reports()[0];
    assert_eq!(report.status, StepStatus::Diverged);
    assert!(report.per_k.iter().all(|m| m.unlearned.is_none()));
}

fn fake_report(algorithm: Algorithm, status: StepStatus, seed: u64, ndcg: f64, ks: &[usize]) -> MetricsReport {
    let m = RankingMetrics {
        ndcg,
        recall: ndcg * 2.0,
        hit: ndcg * 3.0,
    };
    let usable = status == StepStatus::Ok;
    MetricsReport {
        model: ModelKind::BprMf,
        algorithm,
        scenario: Some(ScenarioKind::Spam),
        seed,
        status,
        requests: 4,
        forgotten_interactions: 40,
        per_k: ks
            .iter()
            .map(|&k| KMetrics {
                k,
                unlearned: usable.then_some(m),
                retrained: m,
                sensitive_unlearned: None,
                sensitive_retrained: None,
                rel_items: None,
                rel_eff: usable.then_some(0.0),
            })
            .collect(),
        timing: Timing {
            unlearn_total_s: 12.0 + seed as f64,
            unlearn_avg_per_request_s: 3.0,
            retrain_s: 100.0,
            speedup: Some(8.0),
            deployable: Some(false),
        },
    }
}

#[test]
fn identical_seeds_have_zero_std() {
    let reports: Vec<_> = (0..3).map(|_| fake_report(Algorithm::Gif, StepStatus::Ok, 1, 0.25, &[10, 20])).collect();
    let (_, rows) = aggregate(&reports).unwrap();
    assert_eq!(rows.len(), 1);
    let cell = rows[0].cells[0].unwrap();
    assert_eq!((cell.mean, cell.std, cell.n), (0.25, 0.0, 3));
}

#[test]
fn single_report_renders_one_row() {
    let r = fake_report(Algorithm::Seif, StepStatus::Ok, 1, 0.1, &[10, 20]);
    let text = emit_table(std::slice::from_ref(&r), TableFormat::Text).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 2);
    let header: Vec<&str> = lines[0].split_whitespace().collect();
    let mut expected = vec!["Model".to_string(), "Algorithm".to_string()];
    expected.extend(columns(&[10, 20]));
    assert_eq!(header, expected);
    assert!(lines[1].starts_with("bpr_mf"));
    assert!(lines[1].contains("0.1000 ± 0.0000"));
}

#[test]
fn diverged_and_not_applicable_cells() {
    let reports = vec![
        fake_report(Algorithm::Gif, StepStatus::Diverged, 1, 0.1, &[10]),
        fake_report(Algorithm::Scif, StepStatus::NotApplicable, 1, 0.1, &[10]),
    ];
    let text = emit_table(&reports, TableFormat::Text).unwrap();
    let gif = text.lines().find(|l| l.contains("gif")).unwrap();
    assert_eq!(gif.matches("div.").count(), 5);
    assert!(gif.contains("0.217 ± 0.000"));
    let scif = text.lines().find(|l| l.contains("scif")).unwrap();
    assert_eq!(scif.matches("n/a").count(), 7);
}

#[test]
fn csv_round_trips_numeric_fields() {
    let reports: Vec<_> = (1..=3)
        .map(|s| fake_report(Algorithm::Idea, StepStatus::Ok, s, 0.1 * s as f64 + 1.0 / 3.0, &[5, 20]))
        .chain([fake_report(Algorithm::Kookmin, StepStatus::Diverged, 1, 0.3, &[5, 20])])
        .collect();
    let csv = emit_table(&reports, TableFormat::Csv).unwrap();
    let (ks, back) = parse_table_csv(&csv).unwrap();
    let (ks0, rows) = aggregate(&reports).unwrap();
    assert_eq!(ks, ks0);
    assert_eq!(back, rows);
}

#[test]
fn mismatched_ks_are_rejected() {
    let reports = vec![
        fake_report(Algorithm::Gif, StepStatus::Ok, 1, 0.1, &[10]),
        fake_report(Algorithm::Gif, StepStatus::Ok, 2, 0.1, &[10, 20]),
    ];
    assert!(emit_table(&reports, TableFormat::Text).is_err());
}
