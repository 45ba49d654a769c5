use crate::data::ParallelCorpus;
use crate::error::Result;
use crate::model::{greedy_decode, Seq2Seq};
use crate::surgery::bleu::bleu;

/// Greedy translations of a test corpus and their BLEU.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub bleu: f64,
    pub hypotheses: Vec<Vec<u32>>,
}

/// Greedy-decodes every source of `test` (at most `max_decode_len` tokens)
/// and scores the output against the references in token-id space.
pub fn evaluate<M: Seq2Seq + ?Sized>(model: &M, test: &ParallelCorpus, max_decode_len: usize) -> Result<EvalResult> {
    let hypotheses = test
        .pairs
        .iter()
        .map(|p| greedy_decode(model, &p.src_ids(), max_decode_len))
        .collect::<Result<Vec<_>>>()?;
    let references: Vec<Vec<u32>> = test.pairs.iter().map(|p| p.tgt.clone()).collect();
    Ok(EvalResult {
        bleu: bleu(&hypotheses, &references, 4)?,
        hypotheses,
    })
}
