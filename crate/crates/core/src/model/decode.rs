use crate::autograd::{no_grad, Tensor};
use crate::data::{BOS, EOS};
use crate::error::Result;
use crate::model::checkpoint::TransformerCheckpoint;
use crate::model::config::TransformerConfig;
use crate::model::transformer::{Hooks, Transformer};

/// Anything that can be run as an encoder-decoder at inference time.
pub trait Seq2Seq {
    fn config(&self) -> &TransformerConfig;

    /// Encoder output for an unpadded source (tokens + EOS).
    fn encode(&self, src: &[u32]) -> Result<Tensor>;

    /// Next-token logits for every decoder position.
    fn decode_logits(&self, memory: &Tensor, src_valid: usize, tgt_in: &[u32]) -> Result<Tensor>;
}

impl Seq2Seq for Transformer {
    fn config(&self) -> &TransformerConfig {
        &self.config
    }

    fn encode(&self, src: &[u32]) -> Result<Tensor> {
        Transformer::encode(self, src, src.len(), &mut Hooks::default())
    }

    fn decode_logits(&self, memory: &Tensor, src_valid: usize, tgt_in: &[u32]) -> Result<Tensor> {
        self.decode(memory, src_valid, tgt_in, &mut Hooks::default())
    }
}

impl Seq2Seq for TransformerCheckpoint {
    fn config(&self) -> &TransformerConfig {
        &self.model.config
    }

    fn encode(&self, src: &[u32]) -> Result<Tensor> {
        Seq2Seq::encode(&self.model, src)
    }

    fn decode_logits(&self, memory: &Tensor, src_valid: usize, tgt_in: &[u32]) -> Result<Tensor> {
        self.model.decode_logits(memory, src_valid, tgt_in)
    }
}

/// Teacher-forced logits for one sentence pair, no graph recorded.
pub fn logits<M: Seq2Seq + ?Sized>(model: &M, src: &[u32], tgt_in: &[u32]) -> Result<Tensor> {
    no_grad(|| {
        let memory = model.encode(src)?;
        model.decode_logits(&memory, src.len(), tgt_in)
    })
}

fn argmax(row: &[f32]) -> u32 {
    let mut best = 0;
    for (i, &v) in row.iter().enumerate() {
        if v > row[best] {
            best = i;
        }
    }
    best as u32
}

/// Argmax decoding from BOS until EOS or `max_len` emitted tokens.
///
/// The output never contains BOS/EOS and never exceeds `max_len` or what
/// the model's position table allows.
pub fn greedy_decode<M: Seq2Seq + ?Sized>(model: &M, src: &[u32], max_len: usize) -> Result<Vec<u32>> {
    no_grad(|| {
        let limit = max_len.min(model.config().max_len.saturating_sub(1));
        let memory = model.encode(src)?;
        let mut tgt_in = vec![BOS];
        let mut out = Vec::new();
        while out.len() < limit {
            let logits = model.decode_logits(&memory, src.len(), &tgt_in)?;
            let v = logits.cols();
            let data = logits.data();
            let next = argmax(&data[data.len() - v..]);
            if next == EOS {
                break;
            }
            out.push(next);
            tgt_in.push(next);
        }
        Ok(out)
    })
}
