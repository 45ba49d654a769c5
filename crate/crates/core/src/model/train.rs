use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{adam_step, AdamState, Tensor};
use crate::data::{batchify, ParallelCorpus, PAD};
use crate::error::{Error, Result};
use crate::model::checkpoint::{TrainingMeta, TransformerCheckpoint};
use crate::model::config::TransformerConfig;
use crate::model::transformer::{Dropout, Hooks, Transformer};

/// Teacher optimisation settings. `batch_size` counts sentences.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TeacherHyper {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for TeacherHyper {
    fn default() -> Self {
        TeacherHyper {
            epochs: 20,
            lr: 1e-3,
            batch_size: 1400,
            seed: 0,
        }
    }
}

/// Trains the teacher with Adam on token cross-entropy.
///
/// `on_epoch` sees `(epoch, mean loss)` after every epoch.
pub fn train_teacher(
    corpus: &ParallelCorpus,
    mut config: TransformerConfig,
    hyper: &TeacherHyper,
    mut on_epoch: impl FnMut(usize, f32),
) -> Result<TransformerCheckpoint> {
    if corpus.is_empty() {
        return Err(Error::Corpus("cannot train on an empty corpus".into()));
    }
    if hyper.epochs == 0 || hyper.lr <= 0.0 {
        return Err(Error::Config("epochs and lr must be positive".into()));
    }
    config.src_vocab = corpus.src_vocab.len();
    config.tgt_vocab = corpus.tgt_vocab.len();
    config.validate()?;
    if corpus.max_seq_len() > config.max_len {
        return Err(Error::SequenceTooLong {
            len: corpus.max_seq_len(),
            max_len: config.max_len,
        });
    }
    let model = Transformer::init(config, hyper.seed)?;
    let params = model.params();
    let mut states = AdamState::for_params(&params);
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(hyper.seed.wrapping_add(1));
    let mut curve = Vec::with_capacity(hyper.epochs);
    for epoch in 1..=hyper.epochs {
        let batches = batchify(
            corpus,
            hyper.batch_size,
            model.config.max_len,
            Some(hyper.seed.wrapping_mul(1_000_003).wrapping_add(epoch as u64)),
        );
        let mut total = 0f64;
        let mut tokens = 0usize;
        for batch in &batches {
            let mut logits = Vec::with_capacity(batch.len());
            let mut targets = Vec::new();
            for &i in &batch.indices {
                let pair = &corpus.pairs[i];
                let mut hooks = Hooks {
                    dropout: Some(Dropout {
                        p: model.config.dropout,
                        rng: &mut dropout_rng,
                    }),
                    ..Default::default()
                };
                logits.push(model.forward(&pair.src_ids(), &pair.tgt_in(), &mut hooks)?);
                targets.extend(pair.tgt_out());
            }
            let logits = Tensor::concat(&logits, 0)?;
            let loss = Tensor::cross_entropy(&logits, &targets, Some(PAD))?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            loss.backward()?;
            adam_step(&params, &mut states, hyper.lr)?;
            total += value as f64 * targets.len() as f64;
            tokens += targets.len();
        }
        let mean = (total / tokens as f64) as f32;
        curve.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(TransformerCheckpoint {
        model,
        src_vocab: corpus.src_vocab.clone(),
        tgt_vocab: corpus.tgt_vocab.clone(),
        meta: TrainingMeta {
            epochs: hyper.epochs,
            final_loss: *curve.last().unwrap(),
            seed: hyper.seed,
            lr: hyper.lr,
            batch_size: hyper.batch_size,
            loss_curve: curve,
            init: "glorot_uniform".into(),
        },
    })
}
