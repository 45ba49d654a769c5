//! The teacher: an encoder-decoder Transformer with named access to every
//! attention site.

mod checkpoint;
mod config;
mod decode;
mod layers;
mod train;
mod transformer;

pub use checkpoint::{TrainingMeta, TransformerCheckpoint, CHECKPOINT_FORMAT, CHECKPOINT_VERSION};
pub use config::{AttentionSite, SiteKind, TransformerConfig};
pub use decode::{greedy_decode, logits, Seq2Seq};
pub use layers::{sinusoidal_positional_encoding, AttnMask, FeedForward, LayerNorm, Linear, MhaOutput, MultiHeadAttention};
pub use train::{train_teacher, TeacherHyper};
pub use transformer::{
    ActivationTap, DecoderLayer, Dropout, EncoderLayer, Hooks, SiteActivations, SiteOverride, SiteReplacement,
    Transformer,
};
