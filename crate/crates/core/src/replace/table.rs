use std::fmt::Write;

use crate::error::Result;
use crate::model::{AttentionSite, SiteKind, TransformerConfig};
use crate::replace::ffnet::FFReplacementSpec;
use crate::replace::method::ReplacementMethod;
use crate::replace::size::{SizeLabel, SizeLadder};

/// Realised size of one student network against its budget.
#[derive(Debug, Clone, PartialEq)]
pub struct BudgetRow {
    pub method: ReplacementMethod,
    pub size: SizeLabel,
    pub kind: SiteKind,
    /// Networks per site (heads for ASLR).
    pub nets: usize,
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    /// Per network.
    pub params: usize,
    pub budget: usize,
}

impl BudgetRow {
    pub fn deviation(&self) -> f64 {
        (self.params as f64 - self.budget as f64) / self.budget as f64
    }
}

/// One row per (method, size, site kind) the method may replace.
pub fn budget_table(config: &TransformerConfig, ladder: &SizeLadder) -> Result<Vec<BudgetRow>> {
    let mut rows = Vec::new();
    for method in ReplacementMethod::ALL {
        for kind in SiteKind::ALL.into_iter().filter(|&k| method.valid_for(k)) {
            for size in SizeLabel::ALL {
                let class = ladder.size(method, size);
                let spec = FFReplacementSpec::new(method, AttentionSite::new(kind, 0), class, config, 0)?;
                rows.push(BudgetRow {
                    method,
                    size,
                    kind,
                    nets: spec.heads,
                    d_in: spec.d_in,
                    d_hidden: spec.d_hidden,
                    d_out: spec.d_out,
                    params: spec.param_count(),
                    budget: class.budget,
                });
            }
        }
    }
    Ok(rows)
}

/// Fixed-width text rendering of [`budget_table`].
pub fn render_budget_table(rows: &[BudgetRow]) -> String {
    let mut out = format!(
        "{:<6} {:<4} {:<14} {:>4} {:>6} {:>6} {:>6} {:>11} {:>11} {:>8}\n",
        "method", "size", "site", "nets", "d_in", "hidden", "d_out", "params", "budget", "dev"
    );
    for r in rows {
        let _ = writeln!(
            out,
            "{:<6} {:<4} {:<14} {:>4} {:>6} {:>6} {:>6} {:>11} {:>11} {:>+7.2}%",
            r.method.to_string(),
            r.size.to_string(),
            format!("{:?}", r.kind),
            r.nets,
            r.d_in,
            r.d_hidden,
            r.d_out,
            r.params,
            r.budget,
            100.0 * r.deviation()
        );
    }
    out
}
