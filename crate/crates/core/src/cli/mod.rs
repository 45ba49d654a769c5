//! The command-line pipeline: one subcommand per stage, all artifacts under a
//! run directory named by the configuration hash.

mod config;
mod pipeline;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

pub use config::{expand_grid, CaptureConfig, DataConfig, EvalConfig, GridBlock, RunConfig, Skipped};
pub use pipeline::{Run, Selector};

use crate::error::{Error, Result};
use crate::replace::{ReplacementMethod, SizeLabel};
use crate::surgery::Scope;

#[derive(Debug, Parser)]
#[command(name = "attentionless", version, about = "Distil attention blocks into feed-forward students")]
pub struct Cli {
    /// Run configuration (TOML).
    #[arg(long, short, global = true, default_value = "run.toml")]
    pub config: PathBuf,
    /// Overrides `run_root`.
    #[arg(long, global = true)]
    pub run_root: Option<PathBuf>,
    /// Overrides `seed`.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Overrides any config value, e.g. `--set distill.epochs=5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Clone, Default, Args)]
pub struct SelectorArgs {
    #[arg(long)]
    pub method: Option<ReplacementMethod>,
    #[arg(long)]
    pub scope: Option<Scope>,
    #[arg(long)]
    pub size: Option<SizeLabel>,
}

impl From<&SelectorArgs> for Selector {
    fn from(a: &SelectorArgs) -> Self {
        Selector {
            method: a.method,
            scope: a.scope,
            size: a.size,
        }
    }
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train the teacher Transformer.
    TrainTeacher,
    /// Record teacher activations for the selected experiments.
    Capture(SelectorArgs),
    /// Train students on captured activations.
    Distill {
        #[command(flatten)]
        sel: SelectorArgs,
        /// Students trained concurrently.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
    },
    /// Assemble and check hybrid models.
    Splice(SelectorArgs),
    /// Score the teacher and the hybrid models with BLEU.
    Eval(SelectorArgs),
    /// Aggregate evaluation rows into report files.
    Report,
}

impl Command {
    fn stage(&self) -> &'static str {
        match self {
            Command::TrainTeacher => "train-teacher",
            Command::Capture(_) => "capture",
            Command::Distill { .. } => "distill",
            Command::Splice(_) => "splice",
            Command::Eval(_) => "eval",
            Command::Report => "report",
        }
    }
}

fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut overrides = cli.set.clone();
    if let Some(root) = &cli.run_root {
        let root = root.to_str().ok_or_else(|| Error::Config("run root must be UTF-8".into()))?;
        overrides.push(format!("run_root={}", toml::Value::String(root.to_owned())));
    }
    if let Some(seed) = cli.seed {
        overrides.push(format!("seed={seed}"));
    }
    RunConfig::load(&cli.config, &overrides)
}

/// Runs one parsed command, printing the effective configuration first.
pub fn run(cli: &Cli) -> Result<()> {
    let stage = cli.command.stage();
    let wrap = |e: Error| e.in_stage(stage);
    let config = load_config(cli).map_err(wrap)?;
    let run = Run::open(config).map_err(wrap)?;
    println!("# effective config, hash {}", run.config_hash);
    print!("{}", run.config.to_toml().map_err(wrap)?);
    println!("# run directory {}", run.dir.display());
    match &cli.command {
        Command::TrainTeacher => {
            let hash = run
                .train_teacher(|e, l| eprintln!("epoch {e:>3}  loss {l:.6}"))
                .map_err(wrap)?;
            println!("teacher {hash}");
        }
        Command::Capture(sel) => {
            print!("{}", run.config.grid_summary());
            for p in run.capture(&sel.into()).map_err(wrap)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Distill { sel, jobs } => {
            print!("{}", run.config.grid_summary());
            for p in run.distill(&sel.into(), *jobs).map_err(wrap)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Splice(sel) => {
            for p in run.splice(&sel.into()).map_err(wrap)? {
                println!("wrote {}", p.display());
            }
        }
        Command::Eval(sel) => {
            for r in run.eval(&sel.into()).map_err(wrap)? {
                let e = r.experiment;
                println!("{} {} {}: BLEU {:.4}", e.scope, e.method, e.size, r.absolute_bleu);
            }
        }
        Command::Report => {
            let report = run.report().map_err(wrap)?;
            print!("{}", report.to_text());
        }
    }
    Ok(())
}

/// Entry point for the binary; returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match run(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}
