use std::collections::HashSet;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::corpus::{ParallelCorpus, SentencePair};
use crate::data::vocab::{Vocab, NUM_RESERVED};
use crate::error::{Error, Result};

/// Hard ceiling on synthetic sentence length.
pub const SYNTHETIC_MAX_LEN: usize = 50;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SyntheticTask {
    Copy,
    Reverse,
    /// Each source token is mapped through a fixed seeded bijection.
    Cipher,
}

/// Parameters of a synthetic translation task.
///
/// `vocab_size` counts the four reserved ids.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SyntheticTaskSpec {
    pub task: SyntheticTask,
    pub vocab_size: usize,
    pub min_len: usize,
    pub max_len: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub seed: u64,
}

impl SyntheticTaskSpec {
    pub fn validate(&self) -> Result<()> {
        if self.vocab_size <= NUM_RESERVED {
            return Err(Error::Corpus(format!(
                "vocab_size {} leaves no room beside {NUM_RESERVED} reserved ids",
                self.vocab_size
            )));
        }
        if self.min_len < 1 || self.min_len > self.max_len || self.max_len > SYNTHETIC_MAX_LEN {
            return Err(Error::Corpus(format!(
                "length range {}..={} must satisfy 1 <= min <= max <= {SYNTHETIC_MAX_LEN}",
                self.min_len, self.max_len
            )));
        }
        if self.n_train == 0 {
            return Err(Error::Corpus("n_train must be positive".into()));
        }
        Ok(())
    }

    /// The cipher bijection over real ids; index `id - NUM_RESERVED`.
    pub fn cipher_table(&self) -> Vec<u32> {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut ids: Vec<u32> = (NUM_RESERVED as u32..self.vocab_size as u32).collect();
        ids.shuffle(&mut rng);
        ids
    }

    pub fn vocab(&self) -> Vocab {
        let mut v = Vocab::new();
        for id in NUM_RESERVED..self.vocab_size {
            v.insert(&format!("t{id}"));
        }
        v
    }

    fn translate(&self, src: &[u32], cipher: &[u32]) -> Vec<u32> {
        match self.task {
            SyntheticTask::Copy => src.to_vec(),
            SyntheticTask::Reverse => src.iter().rev().copied().collect(),
            SyntheticTask::Cipher => src.iter().map(|&t| cipher[t as usize - NUM_RESERVED]).collect(),
        }
    }
}

/// Deterministic train/test split; no test source also appears in train.
pub fn generate_synthetic(spec: &SyntheticTaskSpec) -> Result<(ParallelCorpus, ParallelCorpus)> {
    spec.validate()?;
    let cipher = spec.cipher_table();
    // separate stream from the cipher table so the table is independent of sizes
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed ^ 0x5eed_5eed_5eed_5eed);
    let mut seen: HashSet<Vec<u32>> = HashSet::new();
    let wanted = spec.n_train + spec.n_test;
    let max_attempts = 50 * wanted + 1000;
    let mut sources = Vec::with_capacity(wanted);
    let mut attempts = 0;
    while sources.len() < wanted {
        attempts += 1;
        if attempts > max_attempts {
            return Err(Error::Corpus(format!(
                "could only draw {} distinct sentences of the {wanted} requested",
                sources.len()
            )));
        }
        let len = rng.gen_range(spec.min_len..=spec.max_len);
        let src: Vec<u32> = (0..len)
            .map(|_| rng.gen_range(NUM_RESERVED as u32..spec.vocab_size as u32))
            .collect();
        if seen.insert(src.clone()) {
            sources.push(src);
        }
    }
    let vocab = spec.vocab();
    let make = |srcs: &[Vec<u32>], split: &str| ParallelCorpus {
        pairs: srcs
            .iter()
            .map(|s| SentencePair {
                src: s.clone(),
                tgt: spec.translate(s, &cipher),
            })
            .collect(),
        src_vocab: vocab.clone(),
        tgt_vocab: vocab.clone(),
        provenance: format!("synthetic:{:?}:seed={}:{split}", spec.task, spec.seed).to_lowercase(),
    };
    let train = make(&sources[..spec.n_train], "train");
    let test = make(&sources[spec.n_train..], "test");
    Ok((train, test))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn spec(task: SyntheticTask, seed: u64) -> SyntheticTaskSpec {
        SyntheticTaskSpec {
            task,
            vocab_size: 20,
            min_len: 2,
            max_len: 8,
            n_train: 200,
            n_test: 50,
            seed,
        }
    }

    #[test]
    fn copy_and_reverse_targets() {
        let (train, _) = generate_synthetic(&spec(SyntheticTask::Copy, 1)).unwrap();
        assert!(train.pairs.iter().all(|p| p.src == p.tgt));
        let (train, _) = generate_synthetic(&spec(SyntheticTask::Reverse, 1)).unwrap();
        for p in &train.pairs {
            let mut r = p.src.clone();
            r.reverse();
            assert_eq!(p.tgt, r);
        }
    }

    #[test]
    fn cipher_is_a_fixed_bijection() {
        let s = spec(SyntheticTask::Cipher, 7);
        let a = generate_synthetic(&s).unwrap();
        let b = generate_synthetic(&s).unwrap();
        assert_eq!(a, b);
        let table = s.cipher_table();
        let mut sorted = table.clone();
        sorted.sort();
        assert_eq!(sorted, (4..20).collect::<Vec<u32>>());
        for p in &a.0.pairs {
            for (x, y) in p.src.iter().zip(&p.tgt) {
                assert_eq!(table[*x as usize - 4], *y);
            }
        }
    }

    #[test]
    fn tiny_vocab_rejected() {
        let mut s = spec(SyntheticTask::Copy, 0);
        s.vocab_size = 4;
        assert!(generate_synthetic(&s).is_err());
        s.vocab_size = 5;
        s.min_len = 1;
        s.max_len = 1;
        s.n_train = 1;
        s.n_test = 0;
        assert!(generate_synthetic(&s).is_ok());
    }

    #[test]
    fn exhausted_space_is_reported() {
        let s = SyntheticTaskSpec {
            task: SyntheticTask::Copy,
            vocab_size: 5,
            min_len: 1,
            max_len: 2,
            n_train: 2,
            n_test: 1,
            seed: 0,
        };
        assert!(generate_synthetic(&s).is_err());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn splits_are_disjoint(seed in any::<u64>()) {
            let (train, test) = generate_synthetic(&spec(SyntheticTask::Cipher, seed)).unwrap();
            let train_src: HashSet<_> = train.pairs.iter().map(|p| p.src.clone()).collect();
            prop_assert!(test.pairs.iter().all(|p| !train_src.contains(&p.src)));
            prop_assert!(train.pairs.iter().chain(&test.pairs).all(|p| p.src.len() <= 8 && !p.src.is_empty()));
        }
    }
}
