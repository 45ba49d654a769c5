use std::collections::BTreeMap;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replace::{ReplacementMethod, SizeLabel};
use crate::surgery::bleu::BLEU_FORMULA;
use crate::surgery::splice::Scope;

/// One cell of the experiment grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Experiment {
    pub scope: Scope,
    pub method: ReplacementMethod,
    pub size: SizeLabel,
}

/// Absolute BLEU of one spliced model on one test corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BleuRow {
    pub experiment: Experiment,
    pub corpus: String,
    pub absolute_bleu: f64,
    pub config_hash: String,
    pub teacher_hash: String,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelativeRow {
    pub row: BleuRow,
    pub relative_pct: f64,
}

/// Relative BLEU of one experiment averaged over every corpus it ran on.
#[derive(Debug, Clone, PartialEq)]
pub struct AveragedRow {
    pub experiment: Experiment,
    pub corpora: usize,
    pub mean_relative_pct: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BleuReport {
    /// Teacher BLEU per corpus.
    pub baselines: BTreeMap<String, f64>,
    pub rows: Vec<RelativeRow>,
    pub averaged: Vec<AveragedRow>,
}

/// `100 · absolute / baseline`.
pub fn relative_pct(absolute: f64, baseline: f64) -> f64 {
    100.0 * absolute / baseline
}

/// Joins results with their baselines. Rows are sorted by experiment then
/// corpus so the output does not depend on the order results arrived in.
pub fn relative_report(results: &[BleuRow], baselines: &BTreeMap<String, f64>) -> Result<BleuReport> {
    if results.is_empty() {
        return Err(Error::Report("no results to report".into()));
    }
    let mut rows = Vec::with_capacity(results.len());
    for r in results {
        let base = *baselines
            .get(&r.corpus)
            .ok_or_else(|| Error::Report(format!("no baseline for corpus `{}`", r.corpus)))?;
        if !(base > 0.0) {
            return Err(Error::Report(format!("baseline BLEU for `{}` is {base}; cannot take ratios", r.corpus)));
        }
        rows.push(RelativeRow {
            row: r.clone(),
            relative_pct: relative_pct(r.absolute_bleu, base),
        });
    }
    rows.sort_by(|a, b| (a.row.experiment, &a.row.corpus).cmp(&(b.row.experiment, &b.row.corpus)));
    let mut groups: BTreeMap<Experiment, Vec<f64>> = BTreeMap::new();
    for r in &rows {
        groups.entry(r.row.experiment).or_default().push(r.relative_pct);
    }
    let averaged = groups
        .into_iter()
        .map(|(experiment, v)| AveragedRow {
            experiment,
            corpora: v.len(),
            mean_relative_pct: v.iter().sum::<f64>() / v.len() as f64,
        })
        .collect();
    Ok(BleuReport {
        baselines: baselines.clone(),
        rows,
        averaged,
    })
}

impl BleuReport {
    pub fn averaged_pct(&self, experiment: Experiment) -> Option<f64> {
        self.averaged.iter().find(|a| a.experiment == experiment).map(|a| a.mean_relative_pct)
    }

    /// One line per (experiment, corpus).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,scope,size,corpus,absolute_bleu,relative_pct,config_hash,teacher_hash,seed\n");
        for r in &self.rows {
            let e = r.row.experiment;
            let _ = writeln!(
                s,
                "{},{},{},{},{:.6},{:.4},{},{},{}",
                e.method, e.scope, e.size, r.row.corpus, r.row.absolute_bleu, r.relative_pct, r.row.config_hash,
                r.row.teacher_hash, r.row.seed
            );
        }
        s
    }

    /// Relative BLEU averaged over corpora, one line per experiment.
    pub fn averaged_csv(&self) -> String {
        let mut s = String::from("method,scope,size,corpora,mean_relative_pct\n");
        for a in &self.averaged {
            let e = a.experiment;
            let _ = writeln!(s, "{},{},{},{},{:.4}", e.method, e.scope, e.size, a.corpora, a.mean_relative_pct);
        }
        s
    }

    /// Aligned tables: scope/method rows against size columns, absolute BLEU
    /// per corpus followed by averaged relative BLEU.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "BLEU: {BLEU_FORMULA}");
        if let Some(r) = self.rows.first() {
            let _ = writeln!(
                s,
                "config {}  teacher {}  seed {}",
                r.row.config_hash, r.row.teacher_hash, r.row.seed
            );
        }
        let lines: Vec<(Scope, ReplacementMethod)> = {
            let mut v: Vec<_> = self.averaged.iter().map(|a| (a.experiment.scope, a.experiment.method)).collect();
            v.dedup();
            v
        };
        let header = |s: &mut String, title: &str| {
            let _ = writeln!(s, "\n{title}");
            let _ = write!(s, "{:<10}{:<7}", "scope", "method");
            for l in SizeLabel::ALL {
                let _ = write!(s, "{:>9}", l.to_string());
            }
            s.push('\n');
        };
        for (corpus, base) in &self.baselines {
            header(&mut s, &format!("absolute BLEU on {corpus} (baseline {base:.4})"));
            for &(scope, method) in &lines {
                let _ = write!(s, "{:<10}{:<7}", scope.to_string(), method.to_string());
                for size in SizeLabel::ALL {
                    let cell = self.rows.iter().find(|r| {
                        r.row.corpus == *corpus && r.row.experiment == Experiment { scope, method, size }
                    });
                    match cell {
                        Some(r) => {
                            let _ = write!(s, "{:>9.4}", r.row.absolute_bleu);
                        }
                        None => {
                            let _ = write!(s, "{:>9}", "-");
                        }
                    }
                }
                s.push('\n');
            }
        }
        header(&mut s, "relative BLEU [%], averaged over corpora");
        for &(scope, method) in &lines {
            let _ = write!(s, "{:<10}{:<7}", scope.to_string(), method.to_string());
            for size in SizeLabel::ALL {
                match self.averaged_pct(Experiment { scope, method, size }) {
                    Some(p) => {
                        let _ = write!(s, "{p:>9.1}");
                    }
                    None => {
                        let _ = write!(s, "{:>9}", "-");
                    }
                }
            }
            s.push('\n');
        }
        s
    }
}
