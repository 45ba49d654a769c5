use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::container::sha256_hex;
use crate::data::{
    generate_synthetic, load_parallel_text, load_parallel_text_with_vocabs, ParallelCorpus, SyntheticTaskSpec,
    Tokenizer,
};
use crate::distill::{CaptureOptions, DistillConfig};
use crate::error::{Error, Result};
use crate::model::{SiteKind, TeacherHyper, TransformerConfig};
use crate::replace::{ReplacementMethod, SizeLabel, SizeLadder};
use crate::surgery::{Experiment, Scope};

/// Where the parallel data comes from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataConfig {
    Synthetic(SyntheticTaskSpec),
    Text {
        /// Label used for this corpus in reports.
        name: String,
        train_src: PathBuf,
        train_tgt: PathBuf,
        test_src: PathBuf,
        test_tgt: PathBuf,
        #[serde(default)]
        tokenizer: Tokenizer,
    },
}

impl DataConfig {
    pub fn corpus_name(&self) -> String {
        match self {
            DataConfig::Synthetic(s) => serde_json::to_value(s.task)
                .ok()
                .and_then(|v| v.as_str().map(str::to_owned))
                .unwrap_or_else(|| "synthetic".into()),
            DataConfig::Text { name, .. } => name.clone(),
        }
    }

    /// Train and test corpora; the test side shares the training vocabularies.
    pub fn load(&self, max_len: usize) -> Result<(ParallelCorpus, ParallelCorpus)> {
        match self {
            DataConfig::Synthetic(spec) => generate_synthetic(spec),
            DataConfig::Text {
                train_src,
                train_tgt,
                test_src,
                test_tgt,
                tokenizer,
                ..
            } => {
                let (train, _) = load_parallel_text(train_src, train_tgt, *tokenizer, max_len)?;
                let (test, _) = load_parallel_text_with_vocabs(
                    test_src,
                    test_tgt,
                    *tokenizer,
                    max_len,
                    &train.src_vocab,
                    &train.tgt_vocab,
                )?;
                Ok((train, test))
            }
        }
    }

    fn check_paths(&self) -> Result<()> {
        if let DataConfig::Text {
            train_src,
            train_tgt,
            test_src,
            test_tgt,
            ..
        } = self
        {
            for p in [train_src, train_tgt, test_src, test_tgt] {
                if !p.is_file() {
                    return Err(Error::Config(format!("data file {} does not exist", p.display())));
                }
            }
        }
        Ok(())
    }
}

/// Record limits for activation capture, per site kind.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CaptureConfig {
    pub max_records_encoder: Option<usize>,
    pub max_records_decoder: Option<usize>,
}

impl CaptureConfig {
    pub fn options(&self, kind: SiteKind) -> CaptureOptions {
        CaptureOptions {
            max_records: if kind.is_decoder() { self.max_records_decoder } else { self.max_records_encoder },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    /// Longest greedy output; defaults to `max_len − 1`.
    pub max_decode_len: Option<usize>,
    /// Score only the first sentences of the test split.
    pub max_sentences: Option<usize>,
}

/// A block of the experiment grid: every method × scope × size combination.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridBlock {
    pub methods: Vec<ReplacementMethod>,
    pub scopes: Vec<Scope>,
    pub sizes: Vec<SizeLabel>,
}

/// A grid combination that cannot run, and why.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord)]
pub struct Skipped {
    pub method: ReplacementMethod,
    pub scope: Scope,
    pub reason: String,
}

/// Expands grid blocks into distinct runnable experiments, listing invalid
/// method/scope pairs instead of dropping them silently.
pub fn expand_grid(blocks: &[GridBlock]) -> (Vec<Experiment>, Vec<Skipped>) {
    let mut runs = BTreeSet::new();
    let mut skipped = BTreeSet::new();
    for b in blocks {
        for &method in &b.methods {
            for &scope in &b.scopes {
                if !scope.accepts(method) {
                    let bad: Vec<String> = scope
                        .kinds()
                        .iter()
                        .filter(|&&k| !method.valid_for(k))
                        .map(|k| format!("{k:?}"))
                        .collect();
                    skipped.insert(Skipped {
                        method,
                        scope,
                        reason: format!("{method} cannot replace {} attention", bad.join("/")),
                    });
                    continue;
                }
                for &size in &b.sizes {
                    runs.insert(Experiment { scope, method, size });
                }
            }
        }
    }
    (runs.into_iter().collect(), skipped.into_iter().collect())
}

/// Everything a pipeline run needs, read from one TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds teacher initialisation and student training.
    #[serde(default)]
    pub seed: u64,
    /// Parent of the per-config run directories.
    #[serde(default = "default_run_root")]
    pub run_root: PathBuf,
    /// Budget multiplier; defaults to the width-squared scaling of the
    /// reference ladder.
    #[serde(default)]
    pub ladder_scale: Option<f64>,
    #[serde(default)]
    pub model: TransformerConfig,
    #[serde(default)]
    pub teacher: TeacherHyper,
    #[serde(default)]
    pub capture: CaptureConfig,
    #[serde(default)]
    pub distill: DistillConfig,
    #[serde(default)]
    pub eval: EvalConfig,
    #[serde(default)]
    pub grid: Vec<GridBlock>,
    pub data: DataConfig,
}

fn default_run_root() -> PathBuf {
    PathBuf::from("runs")
}

fn parse_override(text: &str) -> Result<(Vec<String>, toml::Value)> {
    let (key, raw) = text
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override `{text}` is not key=value")))?;
    let path: Vec<String> = key.trim().split('.').map(str::to_owned).collect();
    // A bare word that is not valid TOML is taken as a string.
    let value = toml::from_str::<toml::Table>(&format!("v = {}", raw.trim()))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.trim().to_owned()));
    Ok((path, value))
}

fn set_path(table: &mut toml::Table, path: &[String], value: toml::Value) -> Result<()> {
    let (last, parents) = path.split_last().ok_or_else(|| Error::Config("empty override key".into()))?;
    let mut cur = table;
    for p in parents {
        cur = cur
            .entry(p.clone())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("`{p}` is not a table")))?;
    }
    cur.insert(last.clone(), value);
    Ok(())
}

impl RunConfig {
    /// Parses TOML text, applies `key.path=value` overrides, then pushes the
    /// global seed into the teacher and distillation settings.
    pub fn from_toml(text: &str, overrides: &[String]) -> Result<Self> {
        let mut table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            let (path, value) = parse_override(o)?;
            set_path(&mut table, &path, value)?;
        }
        let mut cfg: RunConfig = toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.teacher.seed = cfg.seed;
        cfg.distill.seed = cfg.seed;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text, overrides)
    }

    pub fn validate(&self) -> Result<()> {
        self.distill.validate()?;
        if self.teacher.epochs == 0 || !(self.teacher.lr > 0.0) || self.teacher.batch_size == 0 {
            return Err(Error::Config("teacher epochs, lr and batch_size must be positive".into()));
        }
        if let DataConfig::Synthetic(s) = &self.data {
            s.validate()?;
        }
        self.data.check_paths()
    }

    /// The configuration as a TOML document, with every default filled in.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Hash of the effective configuration, ignoring where runs are stored.
    pub fn hash(&self) -> Result<String> {
        let mut c = self.clone();
        c.run_root = PathBuf::new();
        Ok(sha256_hex(c.to_toml()?.as_bytes()))
    }

    pub fn run_dir(&self) -> Result<PathBuf> {
        Ok(self.run_root.join(&self.hash()?[..12]))
    }

    pub fn ladder(&self) -> SizeLadder {
        match self.ladder_scale {
            Some(scale) => SizeLadder { scale },
            None => SizeLadder::for_width(self.model.max_len, self.model.d_model),
        }
    }

    pub fn max_decode_len(&self) -> usize {
        self.eval.max_decode_len.unwrap_or(self.model.max_len.saturating_sub(1))
    }

    /// Human-readable grid expansion.
    pub fn grid_summary(&self) -> String {
        let (runs, skipped) = expand_grid(&self.grid);
        let mut s = format!("{} experiment(s)\n", runs.len());
        for e in &runs {
            let _ = writeln!(s, "  run   {} {} {}", e.scope, e.method, e.size);
        }
        for k in &skipped {
            let _ = writeln!(s, "  skip  {} {}: {}", k.scope, k.method, k.reason);
        }
        s
    }
}
