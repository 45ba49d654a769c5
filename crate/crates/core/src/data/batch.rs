use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::corpus::ParallelCorpus;
use crate::data::vocab::PAD;

/// Sentences padded to a fixed length, with real-token masks.
#[derive(Debug, Clone, PartialEq)]
pub struct Batch {
    /// Corpus indices of the sentences in this batch.
    pub indices: Vec<usize>,
    /// tokens + EOS, PAD-filled to `max_len`.
    pub src: Vec<Vec<u32>>,
    /// BOS + tokens + EOS, PAD-filled to `max_len`.
    pub tgt: Vec<Vec<u32>>,
    pub src_len: Vec<usize>,
    pub tgt_len: Vec<usize>,
    pub src_mask: Vec<Vec<bool>>,
    pub tgt_mask: Vec<Vec<bool>>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }
}

fn pad(mut ids: Vec<u32>, max_len: usize) -> (Vec<u32>, usize, Vec<bool>) {
    let n = ids.len().min(max_len);
    ids.truncate(max_len);
    ids.resize(max_len, PAD);
    let mask = (0..max_len).map(|i| i < n).collect();
    (ids, n, mask)
}

/// Splits the corpus into padded batches, optionally in a seeded shuffled
/// order. Sequences are assumed to already fit `max_len`.
pub fn batchify(corpus: &ParallelCorpus, batch_size: usize, max_len: usize, shuffle_seed: Option<u64>) -> Vec<Batch> {
    let batch_size = batch_size.max(1);
    let mut order: Vec<usize> = (0..corpus.len()).collect();
    if let Some(seed) = shuffle_seed {
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    }
    order
        .chunks(batch_size)
        .map(|chunk| {
            let mut b = Batch {
                indices: chunk.to_vec(),
                src: Vec::new(),
                tgt: Vec::new(),
                src_len: Vec::new(),
                tgt_len: Vec::new(),
                src_mask: Vec::new(),
                tgt_mask: Vec::new(),
            };
            for &i in chunk {
                let pair = &corpus.pairs[i];
                let (s, sl, sm) = pad(pair.src_ids(), max_len);
                let mut full_tgt = pair.tgt_in();
                full_tgt.push(crate::data::vocab::EOS);
                let (t, tl, tm) = pad(full_tgt, max_len);
                b.src.push(s);
                b.src_len.push(sl);
                b.src_mask.push(sm);
                b.tgt.push(t);
                b.tgt_len.push(tl);
                b.tgt_mask.push(tm);
            }
            b
        })
        .collect()
}
