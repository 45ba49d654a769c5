use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autograd::Tensor;
use crate::container::NamedArray;
use crate::error::{Error, Result};
use crate::model::config::{AttentionSite, SiteKind, TransformerConfig};
use crate::model::layers::{
    glorot, sinusoidal_positional_encoding, AttnMask, FeedForward, LayerNorm, Linear, MultiHeadAttention, ParamList,
    ParamSource,
};
use crate::replace::ReplacementMethod;

/// What a replaced site hands back to the model.
#[derive(Debug, Clone)]
pub enum SiteReplacement {
    /// `[len_q, d_model]`: the block output (ALR), the block output plus
    /// residual (ALRR) or the whole encoder layer output (ELR).
    Output(Tensor),
    /// Per-head outputs `[len_q, d_head]`, recombined by the teacher's
    /// output projection (ASLR).
    Heads(Vec<Tensor>),
}

/// Substitutes some attention sites during a forward pass.
pub trait SiteOverride {
    fn method_at(&self, site: AttentionSite) -> Option<ReplacementMethod>;

    /// `query` is the block input on the query side (`[len_q, d_model]`, of
    /// which the first `query_valid` rows are real). Cross sites also get the
    /// encoder output and its valid length.
    fn replace(
        &self,
        site: AttentionSite,
        query: &Tensor,
        query_valid: usize,
        memory: Option<(&Tensor, usize)>,
    ) -> Result<SiteReplacement>;
}

/// Everything observable at one teacher attention site.
#[derive(Debug, Clone)]
pub struct SiteActivations {
    pub site: AttentionSite,
    pub block_input: Tensor,
    pub query_valid: usize,
    /// Encoder output and valid length, for cross sites.
    pub memory: Option<(Tensor, usize)>,
    /// Attention block output after the output projection.
    pub mha_out: Tensor,
    /// `block_input + mha_out`, the tensor fed to the layer norm.
    pub residual_sum: Tensor,
    pub heads: Vec<Tensor>,
    /// Full encoder layer output (encoder sites only).
    pub layer_out: Option<Tensor>,
}

/// Observer of teacher activations. Sites running under an override are not
/// reported.
pub trait ActivationTap {
    fn record(&mut self, act: SiteActivations);
}

/// Inverted dropout, applied only when present in [`Hooks`].
pub struct Dropout<'a> {
    pub p: f32,
    pub rng: &'a mut ChaCha8Rng,
}

impl Dropout<'_> {
    fn apply(&mut self, x: &Tensor) -> Result<Tensor> {
        if self.p <= 0.0 {
            return Ok(x.clone());
        }
        let keep = 1.0 - self.p;
        let mask: Vec<f32> = (0..x.numel())
            .map(|_| if self.rng.gen::<f32>() < keep { 1.0 / keep } else { 0.0 })
            .collect();
        x.mul(&Tensor::new(mask, x.shape())?)
    }
}

#[derive(Default)]
pub struct Hooks<'a> {
    pub overrides: Option<&'a dyn SiteOverride>,
    pub tap: Option<&'a mut dyn ActivationTap>,
    pub dropout: Option<Dropout<'a>>,
}

impl Hooks<'_> {
    fn drop(&mut self, x: &Tensor) -> Result<Tensor> {
        match self.dropout.as_mut() {
            Some(d) => d.apply(x),
            None => Ok(x.clone()),
        }
    }

    fn method_at(&self, site: AttentionSite) -> Option<ReplacementMethod> {
        self.overrides.and_then(|o| o.method_at(site))
    }
}

#[derive(Debug, Clone)]
pub struct EncoderLayer {
    pub self_attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub ffn: FeedForward,
    pub ln2: LayerNorm,
}

#[derive(Debug, Clone)]
pub struct DecoderLayer {
    pub self_attn: MultiHeadAttention,
    pub ln1: LayerNorm,
    pub cross_attn: MultiHeadAttention,
    pub ln2: LayerNorm,
    pub ffn: FeedForward,
    pub ln3: LayerNorm,
}

/// Post-norm encoder-decoder Transformer.
#[derive(Debug, Clone)]
pub struct Transformer {
    pub config: TransformerConfig,
    pub src_embed: Tensor,
    pub tgt_embed: Tensor,
    pub encoder: Vec<EncoderLayer>,
    pub decoder: Vec<DecoderLayer>,
    pub out: Linear,
    positions: Tensor,
}

fn mismatch(site: AttentionSite, method: ReplacementMethod) -> Error {
    Error::Plan(format!("replacement returned the wrong shape of output for {method:?} at {site}"))
}

impl Transformer {
    /// Glorot-uniform weights, zero biases, unit layer-norm gains.
    pub fn init(config: TransformerConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let c = &config;
        let (d, h) = (c.d_model, c.n_heads);
        let src_embed = Tensor::param("src_embed", glorot(&mut rng, c.src_vocab, d), &[c.src_vocab, d])?;
        let tgt_embed = Tensor::param("tgt_embed", glorot(&mut rng, c.tgt_vocab, d), &[c.tgt_vocab, d])?;
        let mut encoder = Vec::new();
        for l in 0..c.n_layers {
            let p = format!("enc.{l}");
            encoder.push(EncoderLayer {
                self_attn: MultiHeadAttention::init(&format!("{p}.self_attn"), &mut rng, d, h)?,
                ln1: LayerNorm::init(&format!("{p}.ln1"), d)?,
                ffn: FeedForward::init(&format!("{p}.ffn"), &mut rng, d, c.d_ff_inner)?,
                ln2: LayerNorm::init(&format!("{p}.ln2"), d)?,
            });
        }
        let mut decoder = Vec::new();
        for l in 0..c.n_layers {
            let p = format!("dec.{l}");
            decoder.push(DecoderLayer {
                self_attn: MultiHeadAttention::init(&format!("{p}.self_attn"), &mut rng, d, h)?,
                ln1: LayerNorm::init(&format!("{p}.ln1"), d)?,
                cross_attn: MultiHeadAttention::init(&format!("{p}.cross_attn"), &mut rng, d, h)?,
                ln2: LayerNorm::init(&format!("{p}.ln2"), d)?,
                ffn: FeedForward::init(&format!("{p}.ffn"), &mut rng, d, c.d_ff_inner)?,
                ln3: LayerNorm::init(&format!("{p}.ln3"), d)?,
            });
        }
        let out = Linear::init("out", &mut rng, d, c.tgt_vocab)?;
        let positions = sinusoidal_positional_encoding(c.max_len, d)?;
        Ok(Transformer {
            config,
            src_embed,
            tgt_embed,
            encoder,
            decoder,
            out,
            positions,
        })
    }

    /// Rebuilds a model from named arrays; every parameter must be present
    /// exactly once.
    pub fn from_arrays(config: TransformerConfig, arrays: Vec<NamedArray>) -> Result<Self> {
        config.validate()?;
        let mut src = ParamSource::new(arrays)?;
        let c = &config;
        let (d, h) = (c.d_model, c.n_heads);
        let src_embed = src.take("src_embed", &[c.src_vocab, d])?;
        let tgt_embed = src.take("tgt_embed", &[c.tgt_vocab, d])?;
        let mut encoder = Vec::new();
        for l in 0..c.n_layers {
            let p = format!("enc.{l}");
            encoder.push(EncoderLayer {
                self_attn: MultiHeadAttention::load(&format!("{p}.self_attn"), &mut src, d, h)?,
                ln1: LayerNorm::load(&format!("{p}.ln1"), &mut src, d)?,
                ffn: FeedForward::load(&format!("{p}.ffn"), &mut src, d, c.d_ff_inner)?,
                ln2: LayerNorm::load(&format!("{p}.ln2"), &mut src, d)?,
            });
        }
        let mut decoder = Vec::new();
        for l in 0..c.n_layers {
            let p = format!("dec.{l}");
            decoder.push(DecoderLayer {
                self_attn: MultiHeadAttention::load(&format!("{p}.self_attn"), &mut src, d, h)?,
                ln1: LayerNorm::load(&format!("{p}.ln1"), &mut src, d)?,
                cross_attn: MultiHeadAttention::load(&format!("{p}.cross_attn"), &mut src, d, h)?,
                ln2: LayerNorm::load(&format!("{p}.ln2"), &mut src, d)?,
                ffn: FeedForward::load(&format!("{p}.ffn"), &mut src, d, c.d_ff_inner)?,
                ln3: LayerNorm::load(&format!("{p}.ln3"), &mut src, d)?,
            });
        }
        let out = Linear::load("out", &mut src, d, c.tgt_vocab)?;
        src.finish()?;
        let positions = sinusoidal_positional_encoding(c.max_len, d)?;
        Ok(Transformer {
            config,
            src_embed,
            tgt_embed,
            encoder,
            decoder,
            out,
            positions,
        })
    }

    /// All trainable parameters in a fixed order.
    pub fn params(&self) -> Vec<Tensor> {
        let mut p = ParamList::default();
        p.push(&self.src_embed);
        p.push(&self.tgt_embed);
        for l in &self.encoder {
            l.self_attn.collect(&mut p);
            l.ln1.collect(&mut p);
            l.ffn.collect(&mut p);
            l.ln2.collect(&mut p);
        }
        for l in &self.decoder {
            l.self_attn.collect(&mut p);
            l.ln1.collect(&mut p);
            l.cross_attn.collect(&mut p);
            l.ln2.collect(&mut p);
            l.ffn.collect(&mut p);
            l.ln3.collect(&mut p);
        }
        self.out.collect(&mut p);
        p.0
    }

    pub fn to_arrays(&self) -> Vec<NamedArray> {
        self.params()
            .iter()
            .map(|t| NamedArray::new(t.name().expect("parameters are named"), t.shape().to_vec(), t.to_vec()))
            .collect()
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(Tensor::numel).sum()
    }

    pub fn attention(&self, site: AttentionSite) -> &MultiHeadAttention {
        match site.kind {
            SiteKind::EncoderSelf => &self.encoder[site.layer].self_attn,
            SiteKind::DecoderSelf => &self.decoder[site.layer].self_attn,
            SiteKind::DecoderCross => &self.decoder[site.layer].cross_attn,
        }
    }

    fn embed(&self, table: &Tensor, ids: &[u32], hooks: &mut Hooks) -> Result<Tensor> {
        if ids.len() > self.config.max_len {
            return Err(Error::SequenceTooLong {
                len: ids.len(),
                max_len: self.config.max_len,
            });
        }
        if ids.is_empty() {
            return Err(Error::invalid("embed", "empty sequence"));
        }
        let x = Tensor::embedding(table, ids)?.scale((self.config.d_model as f32).sqrt());
        let x = x.add(&self.positions.slice(0, 0, ids.len())?)?;
        hooks.drop(&x)
    }

    /// Runs the encoder. Rows at positions `>= valid` are padding: they are
    /// masked as keys and never influence the real rows.
    pub fn encode(&self, src: &[u32], valid: usize, hooks: &mut Hooks) -> Result<Tensor> {
        if valid == 0 || valid > src.len() {
            return Err(Error::invalid("encode", format!("valid length {valid} for {} ids", src.len())));
        }
        let mut x = self.embed(&self.src_embed, src, hooks)?;
        let len = src.len();
        let mask = (valid < len).then(|| {
            AttnMask {
                q_len: len,
                k_len: len,
                key_valid: valid,
                causal: false,
            }
            .to_bools()
        });
        for (l, layer) in self.encoder.iter().enumerate() {
            let site = AttentionSite::new(SiteKind::EncoderSelf, l);
            x = self.encoder_layer(site, layer, &x, valid, mask.as_deref(), hooks)?;
        }
        Ok(x)
    }

    fn encoder_layer(
        &self,
        site: AttentionSite,
        layer: &EncoderLayer,
        x: &Tensor,
        valid: usize,
        mask: Option<&[bool]>,
        hooks: &mut Hooks,
    ) -> Result<Tensor> {
        let mut teacher_acts = None;
        let x1 = match hooks.method_at(site) {
            Some(method) => {
                let rep = hooks.overrides.unwrap().replace(site, x, valid, None)?;
                match (method, rep) {
                    (ReplacementMethod::Elr, SiteReplacement::Output(y)) => return Ok(y),
                    (ReplacementMethod::Alr, SiteReplacement::Output(y)) => layer.ln1.forward(&x.add(&hooks.drop(&y)?)?)?,
                    (ReplacementMethod::Alrr, SiteReplacement::Output(y)) => layer.ln1.forward(&y)?,
                    (ReplacementMethod::Aslr, SiteReplacement::Heads(h)) => {
                        let y = layer.self_attn.combine_heads(&h)?;
                        layer.ln1.forward(&x.add(&hooks.drop(&y)?)?)?
                    }
                    (m, _) => return Err(mismatch(site, m)),
                }
            }
            None => {
                let mha = layer.self_attn.forward(x, x, x, mask)?;
                let sum = x.add(&hooks.drop(&mha.out)?)?;
                let x1 = layer.ln1.forward(&sum)?;
                teacher_acts = Some((mha, sum));
                x1
            }
        };
        let out = layer.ln2.forward(&x1.add(&hooks.drop(&layer.ffn.forward(&x1)?)?)?)?;
        if let (Some((mha, sum)), Some(tap)) = (teacher_acts, hooks.tap.as_mut()) {
            tap.record(SiteActivations {
                site,
                block_input: x.clone(),
                query_valid: valid,
                memory: None,
                mha_out: mha.out,
                residual_sum: sum,
                heads: mha.per_head,
                layer_out: Some(out.clone()),
            });
        }
        Ok(out)
    }

    /// Runs the decoder over `tgt_in` (BOS-prefixed, unpadded) and returns
    /// next-token logits `[tgt_in.len(), tgt_vocab]`.
    pub fn decode(&self, memory: &Tensor, src_valid: usize, tgt_in: &[u32], hooks: &mut Hooks) -> Result<Tensor> {
        let mut y = self.embed(&self.tgt_embed, tgt_in, hooks)?;
        let t = tgt_in.len();
        let self_mask = AttnMask {
            q_len: t,
            k_len: t,
            key_valid: t,
            causal: true,
        }
        .to_bools();
        let cross_mask = (src_valid < memory.rows()).then(|| {
            AttnMask {
                q_len: t,
                k_len: memory.rows(),
                key_valid: src_valid,
                causal: false,
            }
            .to_bools()
        });
        for (l, layer) in self.decoder.iter().enumerate() {
            let site = AttentionSite::new(SiteKind::DecoderSelf, l);
            let y1 = self.decoder_block(site, &layer.self_attn, &layer.ln1, &y, None, Some(&self_mask), hooks)?;
            let site = AttentionSite::new(SiteKind::DecoderCross, l);
            let y2 = self.decoder_block(
                site,
                &layer.cross_attn,
                &layer.ln2,
                &y1,
                Some((memory, src_valid)),
                cross_mask.as_deref(),
                hooks,
            )?;
            y = layer.ln3.forward(&y2.add(&hooks.drop(&layer.ffn.forward(&y2)?)?)?)?;
        }
        self.out.forward(&y)
    }

    #[allow(clippy::too_many_arguments)]
    fn decoder_block(
        &self,
        site: AttentionSite,
        attn: &MultiHeadAttention,
        ln: &LayerNorm,
        y: &Tensor,
        memory: Option<(&Tensor, usize)>,
        mask: Option<&[bool]>,
        hooks: &mut Hooks,
    ) -> Result<Tensor> {
        let valid = y.rows();
        if let Some(method) = hooks.method_at(site) {
            let rep = hooks.overrides.unwrap().replace(site, y, valid, memory)?;
            return match (method, rep) {
                (ReplacementMethod::Alr, SiteReplacement::Output(o)) => ln.forward(&y.add(&hooks.drop(&o)?)?),
                (ReplacementMethod::Alrr, SiteReplacement::Output(o)) => ln.forward(&o),
                (ReplacementMethod::Aslr, SiteReplacement::Heads(h)) => {
                    let o = attn.combine_heads(&h)?;
                    ln.forward(&y.add(&hooks.drop(&o)?)?)
                }
                (m, _) => Err(mismatch(site, m)),
            };
        }
        let kv = memory.map(|(m, _)| m).unwrap_or(y);
        let mha = attn.forward(y, kv, kv, mask)?;
        let sum = y.add(&hooks.drop(&mha.out)?)?;
        let out = ln.forward(&sum)?;
        if let Some(tap) = hooks.tap.as_mut() {
            tap.record(SiteActivations {
                site,
                block_input: y.clone(),
                query_valid: valid,
                memory: memory.map(|(m, v)| (m.clone(), v)),
                mha_out: mha.out,
                residual_sum: sum,
                heads: mha.per_head,
                layer_out: None,
            });
        }
        Ok(out)
    }

    /// Full teacher-forced pass over one unpadded sentence pair.
    pub fn forward(&self, src: &[u32], tgt_in: &[u32], hooks: &mut Hooks) -> Result<Tensor> {
        let memory = self.encode(src, src.len(), hooks)?;
        self.decode(&memory, src.len(), tgt_in, hooks)
    }
}
