use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Shape of the encoder-decoder teacher.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub n_heads: usize,
    pub n_layers: usize,
    pub d_ff_inner: usize,
    /// Longest sequence the model accepts, specials included.
    pub max_len: usize,
    pub src_vocab: usize,
    pub tgt_vocab: usize,
    /// Only applied while training the teacher.
    pub dropout: f32,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            d_model: 128,
            n_heads: 8,
            n_layers: 6,
            d_ff_inner: 4 * 128,
            max_len: 50,
            src_vocab: 0,
            tgt_vocab: 0,
            dropout: 0.1,
        }
    }
}

impl TransformerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.n_heads == 0 || self.d_model % self.n_heads != 0 {
            return bad(format!("d_model {} not divisible by n_heads {}", self.d_model, self.n_heads));
        }
        if self.d_model % 2 != 0 {
            return bad(format!("d_model {} must be even for sinusoidal positions", self.d_model));
        }
        if self.max_len < 1 || self.n_layers < 1 || self.d_ff_inner < 1 {
            return bad("max_len, n_layers and d_ff_inner must be positive".into());
        }
        if self.src_vocab < 5 || self.tgt_vocab < 5 {
            return bad(format!(
                "vocabularies ({}, {}) must exceed the 4 reserved ids",
                self.src_vocab, self.tgt_vocab
            ));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1)", self.dropout));
        }
        Ok(())
    }

    pub fn d_head(&self) -> usize {
        self.d_model / self.n_heads
    }

    pub fn sites(&self) -> impl Iterator<Item = AttentionSite> + '_ {
        SiteKind::ALL
            .into_iter()
            .flat_map(move |kind| (0..self.n_layers).map(move |layer| AttentionSite { kind, layer }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SiteKind {
    EncoderSelf,
    DecoderSelf,
    DecoderCross,
}

impl SiteKind {
    pub const ALL: [SiteKind; 3] = [SiteKind::EncoderSelf, SiteKind::DecoderSelf, SiteKind::DecoderCross];

    pub fn is_decoder(self) -> bool {
        !matches!(self, SiteKind::EncoderSelf)
    }

    fn tag(self) -> &'static str {
        match self {
            SiteKind::EncoderSelf => "enc_self",
            SiteKind::DecoderSelf => "dec_self",
            SiteKind::DecoderCross => "dec_cross",
        }
    }
}

/// One attention block instance: kind plus layer index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct AttentionSite {
    pub kind: SiteKind,
    pub layer: usize,
}

impl AttentionSite {
    pub fn new(kind: SiteKind, layer: usize) -> Self {
        AttentionSite { kind, layer }
    }

    pub fn check(&self, cfg: &TransformerConfig) -> Result<()> {
        if self.layer >= cfg.n_layers {
            return Err(Error::Config(format!("site {self} outside {} layers", cfg.n_layers)));
        }
        Ok(())
    }
}

impl fmt::Display for AttentionSite {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}", self.kind.tag(), self.layer)
    }
}

impl FromStr for AttentionSite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, layer) = s
            .split_once('.')
            .ok_or_else(|| Error::Config(format!("site `{s}` is not `<kind>.<layer>`")))?;
        let kind = SiteKind::ALL
            .into_iter()
            .find(|k| k.tag() == kind)
            .ok_or_else(|| Error::Config(format!("unknown site kind `{kind}`")))?;
        let layer = layer.parse().map_err(|_| Error::Config(format!("bad layer index in `{s}`")))?;
        Ok(AttentionSite { kind, layer })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reduced_teacher() {
        let c = TransformerConfig::default();
        assert_eq!((c.d_model, c.n_heads, c.n_layers, c.d_ff_inner, c.max_len), (128, 8, 6, 512, 50));
    }

    #[test]
    fn heads_must_divide_model_width() {
        let c = TransformerConfig {
            d_model: 30,
            n_heads: 4,
            src_vocab: 10,
            tgt_vocab: 10,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }

    #[test]
    fn site_names_round_trip() {
        let c = TransformerConfig { n_layers: 2, ..Default::default() };
        let sites: Vec<_> = c.sites().collect();
        assert_eq!(sites.len(), 6);
        for s in sites {
            assert_eq!(s.to_string().parse::<AttentionSite>().unwrap(), s);
        }
        assert!("enc_self.x".parse::<AttentionSite>().is_err());
    }
}
