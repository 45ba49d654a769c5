//! Splicing students into the teacher, scoring with BLEU, and reporting
//! results relative to the unmodified teacher.

mod bleu;
mod eval;
mod report;
mod splice;

pub use bleu::{bleu, BLEU_FORMULA};
pub use eval::{evaluate, EvalResult};
pub use report::{relative_pct, relative_report, AveragedRow, BleuReport, BleuRow, Experiment, RelativeRow};
pub use splice::{splice, ReplayStudent, Scope, SpliceEntry, SplicePlan, SplicedModel};
