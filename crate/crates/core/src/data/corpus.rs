use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::container::sha256_hex;
use crate::data::vocab::{Tokenizer, Vocab, BOS, EOS};
use crate::error::{Error, Result};

/// One source/target pair of raw token ids (no BOS/EOS).
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SentencePair {
    pub src: Vec<u32>,
    pub tgt: Vec<u32>,
}

impl SentencePair {
    /// Source as fed to the encoder: tokens followed by EOS.
    pub fn src_ids(&self) -> Vec<u32> {
        let mut v = self.src.clone();
        v.push(EOS);
        v
    }

    /// Decoder input: BOS followed by tokens.
    pub fn tgt_in(&self) -> Vec<u32> {
        let mut v = Vec::with_capacity(self.tgt.len() + 1);
        v.push(BOS);
        v.extend_from_slice(&self.tgt);
        v
    }

    /// Decoder labels: tokens followed by EOS.
    pub fn tgt_out(&self) -> Vec<u32> {
        let mut v = self.tgt.clone();
        v.push(EOS);
        v
    }

    /// Whether both sides fit `max_len` once specials are counted
    /// (source + EOS, BOS + target + EOS).
    pub fn fits(&self, max_len: usize) -> bool {
        self.src.len() + 1 <= max_len && self.tgt.len() + 2 <= max_len
    }
}

/// Line-aligned parallel data with its vocabularies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub provenance: String,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Longest sequence including specials.
    pub fn max_seq_len(&self) -> usize {
        self.pairs
            .iter()
            .map(|p| (p.src.len() + 1).max(p.tgt.len() + 2))
            .max()
            .unwrap_or(0)
    }

    /// Content hash over the token ids (vocabularies excluded).
    pub fn content_hash(&self) -> String {
        let mut buf = Vec::new();
        for p in &self.pairs {
            for side in [&p.src, &p.tgt] {
                buf.extend_from_slice(&(side.len() as u32).to_le_bytes());
                for id in side {
                    buf.extend_from_slice(&id.to_le_bytes());
                }
            }
        }
        sha256_hex(&buf)
    }

    /// First `n` pairs (all of them if `n` exceeds the length).
    pub fn head(&self, n: usize) -> ParallelCorpus {
        ParallelCorpus {
            pairs: self.pairs.iter().take(n).cloned().collect(),
            src_vocab: self.src_vocab.clone(),
            tgt_vocab: self.tgt_vocab.clone(),
            provenance: format!("{}[..{n}]", self.provenance),
        }
    }
}

/// Outcome of loading a line-aligned corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadReport {
    pub total: usize,
    pub kept: usize,
    pub dropped: usize,
}

impl LoadReport {
    pub fn drop_fraction(&self) -> f64 {
        if self.total == 0 {
            0.0
        } else {
            self.dropped as f64 / self.total as f64
        }
    }
}

fn read_lines(path: &Path) -> Result<Vec<String>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    Ok(text.lines().map(str::to_owned).collect())
}

/// Loads two line-aligned UTF-8 files, building fresh vocabularies.
///
/// Pairs where either side exceeds `max_len` after specials are dropped.
pub fn load_parallel_text(
    src_path: &Path,
    tgt_path: &Path,
    tokenizer: Tokenizer,
    max_len: usize,
) -> Result<(ParallelCorpus, LoadReport)> {
    load_with_vocabs(src_path, tgt_path, tokenizer, max_len, None)
}

/// Like [`load_parallel_text`] but against frozen vocabularies (unseen
/// tokens become UNK), e.g. for a test split.
pub fn load_parallel_text_with_vocabs(
    src_path: &Path,
    tgt_path: &Path,
    tokenizer: Tokenizer,
    max_len: usize,
    src_vocab: &Vocab,
    tgt_vocab: &Vocab,
) -> Result<(ParallelCorpus, LoadReport)> {
    load_with_vocabs(src_path, tgt_path, tokenizer, max_len, Some((src_vocab, tgt_vocab)))
}

fn load_with_vocabs(
    src_path: &Path,
    tgt_path: &Path,
    tokenizer: Tokenizer,
    max_len: usize,
    frozen: Option<(&Vocab, &Vocab)>,
) -> Result<(ParallelCorpus, LoadReport)> {
    let src_lines = read_lines(src_path)?;
    let tgt_lines = read_lines(tgt_path)?;
    if src_lines.len() != tgt_lines.len() {
        return Err(Error::Corpus(format!(
            "{} has {} lines but {} has {}",
            src_path.display(),
            src_lines.len(),
            tgt_path.display(),
            tgt_lines.len()
        )));
    }
    let (mut src_vocab, mut tgt_vocab) = match frozen {
        Some((s, t)) => (s.clone(), t.clone()),
        None => (Vocab::new(), Vocab::new()),
    };
    let mut pairs = Vec::new();
    let mut dropped = 0;
    for (s, t) in src_lines.iter().zip(&tgt_lines) {
        let (s_tok, t_tok) = (tokenizer.tokenize(s), tokenizer.tokenize(t));
        if s_tok.len() + 1 > max_len || t_tok.len() + 2 > max_len {
            dropped += 1;
            continue;
        }
        let pair = match frozen {
            Some(_) => SentencePair {
                src: src_vocab.encode(&s_tok),
                tgt: tgt_vocab.encode(&t_tok),
            },
            None => SentencePair {
                src: src_vocab.encode_grow(&s_tok),
                tgt: tgt_vocab.encode_grow(&t_tok),
            },
        };
        pairs.push(pair);
    }
    let report = LoadReport {
        total: src_lines.len(),
        kept: pairs.len(),
        dropped,
    };
    if pairs.is_empty() {
        return Err(Error::Corpus(format!(
            "no pairs left after filtering {} lines to max_len {max_len}",
            report.total
        )));
    }
    let corpus = ParallelCorpus {
        pairs,
        src_vocab,
        tgt_vocab,
        provenance: format!("{} | {}", src_path.display(), tgt_path.display()),
    };
    Ok((corpus, report))
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn write(dir: &Path, name: &str, lines: &[String]) -> std::path::PathBuf {
        let p = dir.join(name);
        let mut f = fs::File::create(&p).unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        p
    }

    #[test]
    fn short_files_load_fully() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.txt", &["a b".into(), "c".into(), "d e f".into()]);
        let t = write(dir.path(), "t.txt", &["x".into(), "y z".into(), "w".into()]);
        let (c, r) = load_parallel_text(&s, &t, Tokenizer::Word, 50).unwrap();
        assert_eq!(c.len(), 3);
        assert_eq!(r.drop_fraction(), 0.0);
        assert_eq!(c.src_vocab.decode(&c.pairs[2].src), vec!["d", "e", "f"]);
    }

    #[test]
    fn long_source_is_dropped() {
        let dir = tempfile::tempdir().unwrap();
        let long = (0..60).map(|i| format!("w{i}")).collect::<Vec<_>>().join(" ");
        let s = write(dir.path(), "s.txt", &[long, "ok".into()]);
        let t = write(dir.path(), "t.txt", &["short".into(), "fine".into()]);
        let (c, r) = load_parallel_text(&s, &t, Tokenizer::Word, 50).unwrap();
        assert_eq!(c.len(), 1);
        assert_eq!(r.dropped, 1);
        assert!((r.drop_fraction() - 0.5).abs() < 1e-12);
    }

    #[test]
    fn unequal_line_counts_fail() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.txt", &["a".into(), "b".into()]);
        let t = write(dir.path(), "t.txt", &["x".into()]);
        assert!(matches!(
            load_parallel_text(&s, &t, Tokenizer::Word, 50),
            Err(Error::Corpus(_))
        ));
    }

    #[test]
    fn everything_filtered_is_an_error() {
        let dir = tempfile::tempdir().unwrap();
        let s = write(dir.path(), "s.txt", &["a b c d".into()]);
        let t = write(dir.path(), "t.txt", &["x".into()]);
        assert!(load_parallel_text(&s, &t, Tokenizer::Word, 3).is_err());
    }

    #[test]
    fn specials_count_against_max_len() {
        // source 4 tokens + EOS = 5; target 3 tokens + BOS + EOS = 5
        let p = SentencePair { src: vec![5; 4], tgt: vec![6; 3] };
        assert!(p.fits(5));
        assert!(!p.fits(4));
        assert_eq!(p.tgt_in()[0], BOS);
        assert_eq!(*p.tgt_out().last().unwrap(), EOS);
    }
}
