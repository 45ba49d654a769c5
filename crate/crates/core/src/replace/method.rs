use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{AttentionSite, SiteKind};

/// How much of an attention block a student network stands in for.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum ReplacementMethod {
    /// The multi-head attention block only; residual and norm stay.
    Alr,
    /// Attention block and its residual add; the skip connection goes away.
    Alrr,
    /// One network per head; the teacher's output projection recombines them.
    Aslr,
    /// The whole encoder layer.
    Elr,
}

impl ReplacementMethod {
    pub const ALL: [ReplacementMethod; 4] = [
        ReplacementMethod::Alr,
        ReplacementMethod::Alrr,
        ReplacementMethod::Aslr,
        ReplacementMethod::Elr,
    ];

    pub fn label(self) -> &'static str {
        match self {
            ReplacementMethod::Alr => "ALR",
            ReplacementMethod::Alrr => "ALRR",
            ReplacementMethod::Aslr => "ASLR",
            ReplacementMethod::Elr => "ELR",
        }
    }

    pub fn valid_for(self, kind: SiteKind) -> bool {
        !matches!((self, kind), (ReplacementMethod::Elr, SiteKind::DecoderSelf | SiteKind::DecoderCross))
    }

    pub fn check_site(self, site: AttentionSite) -> Result<()> {
        if self.valid_for(site.kind) {
            Ok(())
        } else {
            Err(Error::InvalidMethod { method: self, site })
        }
    }
}

impl fmt::Display for ReplacementMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for ReplacementMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ReplacementMethod::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Config(format!("unknown replacement method `{s}`")))
    }
}
