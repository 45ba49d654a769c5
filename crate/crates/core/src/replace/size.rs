//! Parameter budgets for the student size ladder.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::replace::method::ReplacementMethod;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SizeLabel {
    XS,
    S,
    M,
    L,
}

impl SizeLabel {
    pub const ALL: [SizeLabel; 4] = [SizeLabel::XS, SizeLabel::S, SizeLabel::M, SizeLabel::L];

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for SizeLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{self:?}")
    }
}

impl FromStr for SizeLabel {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SizeLabel::ALL
            .into_iter()
            .find(|l| l.to_string().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown size `{s}`")))
    }
}

/// A size label with its target parameter count for one network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizeClass {
    pub label: SizeLabel,
    pub budget: usize,
}

/// Budgets at the reference dims (d_model 128, max_len 50, 8 heads), per
/// network. ASLR budgets are per head.
const WHOLE_BLOCK_BUDGETS: [usize; 4] = [320_000, 640_000, 10_000_000, 41_000_000];
const PER_HEAD_BUDGETS: [usize; 4] = [290_000, 1_500_000, 11_500_000, 46_000_000];

/// Reference flattened width `max_len · d_model` the budgets were set for.
pub const REFERENCE_WIDTH: usize = 50 * 128;

/// Maps (method, size) to a budget, scaled for the model at hand.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SizeLadder {
    pub scale: f64,
}

impl SizeLadder {
    /// Unscaled budgets.
    pub fn reference() -> Self {
        SizeLadder { scale: 1.0 }
    }

    /// Budgets shrunk by `(width / REFERENCE_WIDTH)²` where
    /// `width = max_len · d_model`. A dense map between two flattened
    /// sentences scales with the square of the width, so this keeps every
    /// budget ratio of the reference ladder.
    pub fn for_width(max_len: usize, d_model: usize) -> Self {
        let r = (max_len * d_model) as f64 / REFERENCE_WIDTH as f64;
        SizeLadder { scale: r * r }
    }

    pub fn reference_budget(method: ReplacementMethod, label: SizeLabel) -> usize {
        match method {
            ReplacementMethod::Aslr => PER_HEAD_BUDGETS[label.index()],
            _ => WHOLE_BLOCK_BUDGETS[label.index()],
        }
    }

    pub fn size(&self, method: ReplacementMethod, label: SizeLabel) -> SizeClass {
        let budget = (Self::reference_budget(method, label) as f64 * self.scale).round() as usize;
        SizeClass { label, budget }
    }
}

/// Parameters of a one-hidden-layer network with biases.
pub fn param_count(d_in: usize, d_hidden: usize, d_out: usize) -> usize {
    (d_in + 1) * d_hidden + (d_hidden + 1) * d_out
}

/// Hidden width whose parameter count lands closest to `budget`.
///
/// Solves `(d_in+1)·h + (h+1)·d_out = budget` for `h` and takes whichever
/// neighbouring integer is nearer.
pub fn hidden_width_for_budget(d_in: usize, d_out: usize, budget: usize) -> Result<usize> {
    if budget <= d_in + d_out {
        return Err(Error::Config(format!(
            "budget {budget} too small for a {d_in}→{d_out} network with a hidden unit"
        )));
    }
    let per_unit = (d_in + d_out + 1) as f64;
    let exact = (budget as f64 - d_out as f64) / per_unit;
    let lo = (exact.floor() as usize).max(1);
    let hi = lo + 1;
    let dev = |h: usize| (param_count(d_in, h, d_out) as i64 - budget as i64).unsigned_abs();
    Ok(if dev(hi) < dev(lo) { hi } else { lo })
}
