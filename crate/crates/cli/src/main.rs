use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use erasebench::data::synthetic::{generate, SyntheticConfig};
use erasebench::harness::{
    collect_reports, emit_table, evaluate_stage, parse_config, prepare, retrain_stage, run_experiment, train_stage,
    unlearn_stage, unlearned_checkpoint, write_checkpoint, write_file, write_report, write_requests, ExperimentConfig,
    Prepared, RunOptions, SeedPaths, TableFormat, EXIT_CONFIG, EXIT_HALTED,
};
use erasebench::models::load_checkpoint;
use erasebench::scenarios::{load_requests, MANIFEST_FILE};
use erasebench::unlearn::{parse_jsonl, RunHooks};
use erasebench::Error;

#[derive(Parser)]
#[command(
    name = "erasebench",
    version,
    about = "Benchmark approximate unlearning for collaborative-filtering recommenders",
    after_long_help = defaults_help()
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

fn defaults_help() -> String {
    format!(
        "Exit codes: 0 success, 2 config error, 3 divergence under the halt policy, 1 anything else.\n\
         ERASEBENCH_THREADS bounds evaluation threads.\n\n\
         Config defaults (every key is optional except the dataset source):\n\n{}",
        ExperimentConfig::documented_defaults()
    )
}

#[derive(Args, Clone)]
struct Common {
    /// Experiment config (TOML).
    #[arg(long)]
    config: PathBuf,
    /// Seed to run; defaults to the first of run.seeds (`run` uses all).
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides run.out_dir.
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Overwrite existing artifacts.
    #[arg(long)]
    force: bool,
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Csv,
}

#[derive(Subcommand)]
enum Command {
    /// Train the model on the scenario's training data.
    Train(Common),
    /// Generate the unlearning request sequence.
    ScenarioGen(Common),
    /// Run the request sequence against the trained checkpoint.
    Unlearn(Common),
    /// Train the reference model on the fully retained data.
    Retrain(Common),
    /// Compare the unlearned and retrained checkpoints.
    Evaluate(Common),
    /// Full pipeline for every seed, then the aggregate table.
    Run(Common),
    /// Aggregate table of every report in a directory.
    Report {
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long, value_enum, default_value = "text")]
        format: Format,
    },
    /// Write a synthetic interaction log as TSV.
    SynthData {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = SyntheticConfig::default().users)]
        users: usize,
        #[arg(long, default_value_t = SyntheticConfig::default().items)]
        items: usize,
        #[arg(long, default_value_t = SyntheticConfig::default().clusters)]
        clusters: usize,
        #[arg(long, default_value_t = SyntheticConfig::default().min_per_user)]
        min_per_user: usize,
        #[arg(long, default_value_t = SyntheticConfig::default().max_per_user)]
        max_per_user: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        force: bool,
    },
}

/// What a stage command works on: the config, the chosen seed, its
/// scenario and its artifact paths.
struct Stage {
    cfg: ExperimentConfig,
    seed: u64,
    prep: Prepared,
    paths: SeedPaths,
    force: bool,
}

fn load_config(common: &Common) -> Result<ExperimentConfig> {
    let mut cfg = parse_config(&common.config)?;
    if let Some(dir) = &common.out_dir {
        cfg.run.out_dir = dir.clone();
    }
    if let Some(seed) = common.seed {
        cfg.run.seeds = vec![seed];
    }
    Ok(cfg)
}

fn stage(common: &Common) -> Result<Stage> {
    let cfg = load_config(common)?;
    let seed = cfg.run.seeds[0];
    let base = cfg.dataset.load()?;
    let digest = cfg.digest(&base)?;
    std::fs::create_dir_all(&cfg.run.out_dir).with_context(|| format!("creating {}", cfg.run.out_dir.display()))?;
    let prep = prepare(&cfg, &base, seed)?;
    let paths = SeedPaths::new(&cfg.run.out_dir, &digest, seed);
    Ok(Stage {
        cfg,
        seed,
        prep,
        paths,
        force: common.force,
    })
}

fn need(path: &Path, producer: &str) -> Result<()> {
    if !path.exists() {
        bail!("{} is missing; run `erasebench {producer}` first", path.display());
    }
    Ok(())
}

fn execute(command: Command) -> Result<u8> {
    match command {
        Command::Train(c) => {
            let s = stage(&c)?;
            let ck = train_stage(&s.cfg, &s.prep, s.seed)?;
            write_checkpoint(&s.paths.trained(), &ck, s.force)?;
            println!("{}", s.paths.trained().display());
        }
        Command::ScenarioGen(c) => {
            let s = stage(&c)?;
            write_requests(&s.paths.requests(), &s.prep.training, &s.prep.requests, s.force)?;
            println!(
                "{} ({} requests, {} interactions)",
                s.paths.requests().display(),
                s.prep.requests.len(),
                s.prep.requests.total_interactions()
            );
        }
        Command::Retrain(c) => {
            let s = stage(&c)?;
            let ck = retrain_stage(&s.cfg, &s.prep, s.seed)?;
            write_checkpoint(&s.paths.retrained(), &ck, s.force)?;
            println!("{} ({:.3}s)", s.paths.retrained().display(), ck.provenance.wall_clock_train);
        }
        Command::Unlearn(c) => {
            let mut s = stage(&c)?;
            need(&s.paths.trained(), "train")?;
            let trained = load_checkpoint(&s.paths.trained())?;
            if let Some(w) = trained.provenance_warning(&s.prep.training) {
                eprintln!("warning: {w}");
            }
            if s.paths.requests().join(MANIFEST_FILE).exists() {
                s.prep.requests = load_requests(&s.paths.requests(), &s.prep.training)?;
            }
            let t = unlearn_stage(&s.cfg, &s.prep, &trained, s.seed, &RunHooks::default())?;
            write_checkpoint(&s.paths.unlearned(), &unlearned_checkpoint(&trained, &t), s.force)?;
            write_file(&s.paths.steps(), t.to_jsonl()?.as_bytes(), s.force)?;
            println!("{} ({} steps, {})", s.paths.steps().display(), t.len(), t.status().label());
            if t.halted {
                eprintln!("unlearning diverged; halted");
                return Ok(EXIT_HALTED);
            }
        }
        Command::Evaluate(c) => {
            let s = stage(&c)?;
            need(&s.paths.unlearned(), "unlearn")?;
            need(&s.paths.retrained(), "retrain")?;
            let records = parse_jsonl(
                &std::fs::read_to_string(s.paths.steps()).with_context(|| format!("reading {}", s.paths.steps().display()))?,
            )?;
            let unlearned = load_checkpoint(&s.paths.unlearned())?;
            let retrained = load_checkpoint(&s.paths.retrained())?;
            let report = evaluate_stage(&s.cfg, &s.prep, &records, &unlearned, &retrained, s.seed)?;
            write_report(&s.paths, &report, s.force)?;
            print!("{}", emit_table(std::slice::from_ref(&report), TableFormat::Text)?);
        }
        Command::Run(c) => {
            let cfg = load_config(&c)?;
            let run = run_experiment(
                &cfg,
                &RunOptions {
                    force: c.force,
                    hooks: RunHooks::default(),
                },
            )?;
            for (seed, err) in run.failures() {
                eprintln!("seed {seed} failed: {err}");
            }
            if let Some((text, _)) = &run.tables {
                print!("{}", std::fs::read_to_string(text).with_context(|| format!("reading {}", text.display()))?);
            }
            if run.any_halted() {
                eprintln!("unlearning diverged under the halt policy");
            }
            return Ok(run.exit_code());
        }
        Command::Report { out_dir, format } => {
            let reports = collect_reports(&out_dir)?;
            if reports.is_empty() {
                bail!("no reports in {}", out_dir.display());
            }
            let format = match format {
                Format::Text => TableFormat::Text,
                Format::Csv => TableFormat::Csv,
            };
            print!("{}", emit_table(&reports, format)?);
        }
        Command::SynthData {
            out,
            users,
            items,
            clusters,
            min_per_user,
            max_per_user,
            seed,
            force,
        } => {
            let cfg = SyntheticConfig {
                users,
                items,
                clusters,
                min_per_user,
                max_per_user,
                seed,
                ..Default::default()
            };
            let log = generate(&cfg)?;
            erasebench::harness::guard(&out, force)?;
            log.save(&out)?;
            println!("{} ({} interactions)", out.display(), log.len());
        }
    }
    Ok(0)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            let config_error = e.chain().any(|c| matches!(c.downcast_ref::<Error>(), Some(Error::Config(_))));
            ExitCode::from(if config_error { EXIT_CONFIG } else { 1 })
        }
    }
}
