use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::autograd::LAYER_NORM_EPS;
use crate::container::{self, sha256_hex};
use crate::data::Vocab;
use crate::error::{Error, Result};
use crate::model::config::TransformerConfig;
use crate::model::transformer::Transformer;

pub const CHECKPOINT_FORMAT: &str = "attentionless/transformer";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub epochs: usize,
    pub final_loss: f32,
    pub seed: u64,
    pub lr: f32,
    pub batch_size: usize,
    /// Per-epoch mean training loss, in order.
    pub loss_curve: Vec<f32>,
    pub init: String,
}

#[derive(Debug, Serialize, Deserialize)]
struct Header {
    format: String,
    version: u32,
    config: TransformerConfig,
    layer_norm_eps: f32,
    meta: TrainingMeta,
    src_vocab: Vocab,
    tgt_vocab: Vocab,
}

/// Teacher parameters plus everything needed to reuse them.
#[derive(Debug, Clone)]
pub struct TransformerCheckpoint {
    pub model: Transformer,
    pub src_vocab: Vocab,
    pub tgt_vocab: Vocab,
    pub meta: TrainingMeta,
}

impl TransformerCheckpoint {
    pub fn config(&self) -> &TransformerConfig {
        &self.model.config
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let header = Header {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            config: self.model.config.clone(),
            layer_norm_eps: LAYER_NORM_EPS,
            meta: self.meta.clone(),
            src_vocab: self.src_vocab.clone(),
            tgt_vocab: self.tgt_vocab.clone(),
        };
        container::encode(&header, &self.model.to_arrays())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, arrays): (Header, _) = container::decode(bytes)?;
        if h.format != CHECKPOINT_FORMAT || h.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "expected {CHECKPOINT_FORMAT} v{CHECKPOINT_VERSION}, found {} v{}",
                h.format, h.version
            )));
        }
        if h.layer_norm_eps != LAYER_NORM_EPS {
            return Err(Error::Format(format!("checkpoint layer-norm eps {} unsupported", h.layer_norm_eps)));
        }
        Ok(TransformerCheckpoint {
            model: Transformer::from_arrays(h.config, arrays)?,
            src_vocab: h.src_vocab,
            tgt_vocab: h.tgt_vocab,
            meta: h.meta,
        })
    }

    /// Content hash identifying this teacher to downstream artifacts.
    pub fn hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }

    pub fn save(&self, path: &Path) -> Result<String> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, &bytes).map_err(|e| Error::io(path, e))?;
        Ok(sha256_hex(&bytes))
    }

    /// Loads a checkpoint and returns it with its content hash.
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Ok((Self::from_bytes(&bytes)?, sha256_hex(&bytes)))
    }
}
