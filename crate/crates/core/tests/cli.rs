#[path = "support/fixtures.rs"]
mod fixtures;

use std::fs;
use std::path::{Path, PathBuf};

use attentionless::cli::{Cli, Run, RunConfig, Selector};
use clap::Parser;
use attentionless::replace::{ReplacementMethod, SizeLabel};
use attentionless::surgery::Scope;
use attentionless::Error;
use fixtures::{cli, full_pipeline, TINY_RUN};

fn setup() -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.toml");
    fs::write(&config, TINY_RUN).unwrap();
    (dir, config)
}

fn csv_rows(dir: &Path) -> Vec<String> {
    let text = fs::read_to_string(dir.join("report.csv")).unwrap();
    text.lines().skip(1).map(str::to_owned).collect()
}

#[test]
fn single_experiment_smoke_emits_one_row() {
    let (dir, config) = setup();
    let root = dir.path().join("runs");
    let sel = ["--scope", "EncSA", "--method", "ALR", "--size", "XS"];
    assert_eq!(cli(&config, &root, &["train-teacher"]), 0);
    for stage in ["capture", "distill", "splice", "eval"] {
        let args: Vec<&str> = std::iter::once(stage).chain(sel).collect();
        assert_eq!(cli(&config, &root, &args), 0, "{stage}");
    }
    assert_eq!(cli(&config, &root, &["report"]), 0);
    let run = fs::read_dir(&root).unwrap().next().unwrap().unwrap().path();
    let rows = csv_rows(&run);
    assert_eq!(rows.len(), 1);
    assert!(rows[0].starts_with("ALR,EncSA,XS,cipher,"), "{}", rows[0]);
    assert!(run.join("teacher.ckpt").is_file());
    let ckpt = fs::read(run.join("teacher.ckpt")).unwrap();
    let back = attentionless::model::TransformerCheckpoint::from_bytes(&ckpt).unwrap();
    assert_eq!(back.to_bytes().unwrap(), ckpt);
}

#[test]
fn full_encoder_grid_reports_sixteen_rows_reproducibly() {
    let (dir, config) = setup();
    let a = full_pipeline(&config, &dir.path().join("a"), &[]);
    let b = full_pipeline(&config, &dir.path().join("b"), &[]);
    assert_eq!(csv_rows(&a).len(), 16);
    assert_eq!(a.file_name(), b.file_name(), "run directory follows the config hash");
    for name in ["report.csv", "relative.csv", "report.txt"] {
        assert_eq!(fs::read(a.join(name)).unwrap(), fs::read(b.join(name)).unwrap(), "{name}");
    }
    let grid = fs::read_to_string(a.join("grid.txt")).unwrap();
    assert!(grid.starts_with("16 experiment(s)"));
}

#[test]
fn report_without_rows_is_an_error() {
    let (dir, config) = setup();
    let root = dir.path().join("runs");
    let cfg = RunConfig::load(&config, &[format!("run_root=\"{}\"", root.display()), "grid=[]".into()]).unwrap();
    let run = Run::open(cfg).unwrap();
    run.train_teacher(|_, _| {}).unwrap();
    assert!(run.eval(&Selector::all()).unwrap().is_empty());
    let err = run.report().unwrap_err();
    assert!(err.to_string().contains("no results"), "{err}");
    assert!(!run.report_paths()[0].exists());
}

#[test]
fn retrained_teacher_invalidates_downstream_artifacts() {
    let (dir, config) = setup();
    let root = dir.path().join("runs");
    let cfg = RunConfig::load(&config, &[format!("run_root=\"{}\"", root.display())]).unwrap();
    let run = Run::open(cfg.clone()).unwrap();
    let sel = Selector::one(Scope::EncSA, ReplacementMethod::Alr, SizeLabel::XS);
    run.train_teacher(|_, _| {}).unwrap();
    run.capture(&sel).unwrap();
    run.distill(&sel, 1).unwrap();
    run.splice(&sel).unwrap();

    // A teacher trained with another seed lands on the same paths.
    let other = RunConfig {
        seed: cfg.seed + 1,
        ..cfg.clone()
    };
    let mut other = RunConfig::from_toml(&other.to_toml().unwrap(), &[]).unwrap();
    other.run_root = dir.path().join("scratch");
    let stranger = Run::open(other).unwrap();
    stranger.train_teacher(|_, _| {}).unwrap();
    fs::copy(stranger.teacher_path(), run.teacher_path()).unwrap();

    let err = run.eval(&sel).unwrap_err();
    assert!(matches!(err, Error::TeacherMismatch { .. }), "{err}");
    let err = run.distill(&sel, 1).unwrap_err();
    assert!(matches!(err, Error::TeacherMismatch { .. }), "{err}");
}

#[test]
fn failures_exit_nonzero_with_the_stage_named() {
    let (dir, config) = setup();
    let root = dir.path().join("runs");
    assert_eq!(cli(&config, &root, &["capture"]), 1);
    assert_eq!(cli(&config, &root, &["no-such-stage"]), 2);
    let err = attentionless::cli::run(&Cli::parse_from([
        "attentionless",
        "--config",
        config.to_str().unwrap(),
        "--run-root",
        root.to_str().unwrap(),
        "splice",
    ]))
    .unwrap_err();
    assert!(err.to_string().starts_with("splice"), "{err}");
}

#[test]
fn parallel_distillation_matches_sequential() {
    let (dir, config) = setup();
    let sel = Selector {
        scope: Some(Scope::EncSA),
        size: Some(SizeLabel::S),
        method: None,
    };
    let mut outputs = Vec::new();
    for (name, jobs) in [("seq", 1), ("par", 3)] {
        let cfg = RunConfig::load(&config, &[format!("run_root=\"{}\"", dir.path().join(name).display())]).unwrap();
        let run = Run::open(cfg).unwrap();
        run.train_teacher(|_, _| {}).unwrap();
        run.capture(&sel).unwrap();
        let paths = run.distill(&sel, jobs).unwrap();
        assert_eq!(paths.len(), 4);
        outputs.push(paths.iter().map(|p| fs::read(p).unwrap()).collect::<Vec<_>>());
    }
    assert_eq!(outputs[0], outputs[1]);
}
