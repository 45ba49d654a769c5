//! Tokenization, parallel corpora, padding, and synthetic translation tasks.

mod batch;
mod corpus;
mod synthetic;
mod vocab;

pub use batch::{batchify, Batch};
pub use corpus::{load_parallel_text, load_parallel_text_with_vocabs, LoadReport, ParallelCorpus, SentencePair};
pub use synthetic::{generate_synthetic, SyntheticTask, SyntheticTaskSpec, SYNTHETIC_MAX_LEN};
pub use vocab::{Tokenizer, Vocab, BOS, EOS, NUM_RESERVED, PAD, UNK};
