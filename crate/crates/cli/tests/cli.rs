use std::path::Path;
use std::process::{Command, Output};

fn erasebench(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_erasebench"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("spawn erasebench")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exit code")
}

fn setup(unlearn: &str, run: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = erasebench(
        dir.path(),
        &[
            "synth-data", "--out", "data.tsv", "--users", "60", "--items", "40", "--clusters", "4", "--min-per-user",
            "6", "--max-per-user", "12", "--seed", "3",
        ],
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let cfg = format!(
        "[dataset]\npath = \"data.tsv\"\nsensitive_categories = [\"cat0\"]\n\
         [model]\nembedding_dim = 6\nepochs = 4\n\
         [scenario]\nbudget_fraction = 0.02\n\
         [unlearn]\n{unlearn}\n\
         [run]\nseeds = [1]\n{run}\n"
    );
    std::fs::write(dir.path().join("exp.toml"), cfg).unwrap();
    dir
}

const COMMON: [&str; 4] = ["--config", "exp.toml", "--out-dir", "out"];

fn stage(dir: &Path, cmd: &str) -> Output {
    let mut args = vec![cmd];
    args.extend(COMMON);
    erasebench(dir, &args)
}

#[test]
fn staged_commands_match_run() {
    let dir = setup("algorithm = \"scif\"", "");
    let d = dir.path();
    let early = stage(d, "evaluate");
    assert_eq!(code(&early), 1);
    assert!(String::from_utf8_lossy(&early.stderr).contains("run `erasebench unlearn` first"));
    for cmd in ["train", "scenario-gen", "retrain", "unlearn", "evaluate"] {
        let out = stage(d, cmd);
        assert_eq!(code(&out), 0, "{cmd}: {}", String::from_utf8_lossy(&out.stderr));
    }
    let staged: Vec<_> = std::fs::read_dir(d.join("out")).unwrap().map(|e| e.unwrap().path()).collect();
    let report = staged.iter().find(|p| p.to_string_lossy().ends_with("_report.json")).unwrap();
    let staged_report = std::fs::read(report).unwrap();

    let out = erasebench(d, &["run", "--config", "exp.toml", "--out-dir", "full"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("scif"));
    let full = d.join("full").join(report.file_name().unwrap());
    assert_eq!(std::fs::read(full).unwrap(), staged_report);

    let table = erasebench(d, &["report", "--out-dir", "full", "--format", "csv"]);
    assert_eq!(code(&table), 0);
    assert!(String::from_utf8_lossy(&table.stdout).starts_with("scenario,model,algorithm,status"));
}

#[test]
fn rerun_needs_force() {
    let dir = setup("algorithm = \"ceu\"", "");
    let d = dir.path();
    assert_eq!(code(&stage(d, "run")), 0);
    let again = stage(d, "run");
    assert_eq!(code(&again), 1);
    assert!(String::from_utf8_lossy(&again.stderr).contains("already exists"));
    let mut args = vec!["run", "--force"];
    args.extend(COMMON);
    assert_eq!(code(&erasebench(d, &args)), 0);
}

#[test]
fn config_errors_exit_two() {
    let dir = setup("algoritm = \"scif\"", "");
    let out = stage(dir.path(), "run");
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("algoritm"));

    let dir = setup("algorithm = \"scif\"\nmax_norm = -1.0", "");
    assert_eq!(code(&stage(dir.path(), "train")), 2);
}

#[test]
fn divergence_under_halt_exits_three() {
    let dir = setup("algorithm = \"seif\"\nseif_sigma = 1e200", "policy = \"halt_on_diverge\"");
    let out = stage(dir.path(), "run");
    assert_eq!(code(&out), 3, "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stdout).contains("div."));

    let dir = setup("algorithm = \"seif\"\nseif_sigma = 1e200", "policy = \"continue\"");
    assert_eq!(code(&stage(dir.path(), "run")), 0);
}

#[test]
fn help_documents_defaults() {
    let out = erasebench(Path::new("."), &["--help"]);
    let text = String::from_utf8_lossy(&out.stdout);
    for key in ["max_norm = 10.0", "seif_sigma = 0.6", "batch_size = 256", "seeds = [", "ks = ["] {
        assert!(text.contains(key), "{key}");
    }
}
