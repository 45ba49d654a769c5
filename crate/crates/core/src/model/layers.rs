use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::autograd::{Tensor, LAYER_NORM_EPS, MASK_FILL};
use crate::container::NamedArray;
use crate::error::{Error, Result};

pub(crate) fn glorot(rng: &mut ChaCha8Rng, fan_in: usize, fan_out: usize) -> Vec<f32> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt() as f32;
    (0..fan_in * fan_out).map(|_| rng.gen_range(-limit..limit)).collect()
}

/// Collects parameters in a fixed order.
#[derive(Default)]
pub(crate) struct ParamList(pub Vec<Tensor>);

impl ParamList {
    pub fn push(&mut self, t: &Tensor) {
        self.0.push(t.clone());
    }
}

/// Looks up parameters by name while rebuilding a model from arrays.
pub(crate) struct ParamSource {
    arrays: std::collections::HashMap<String, NamedArray>,
}

impl ParamSource {
    pub fn new(arrays: Vec<NamedArray>) -> Result<Self> {
        let mut map = std::collections::HashMap::new();
        for a in arrays {
            let name = a.name.clone();
            if map.insert(name.clone(), a).is_some() {
                return Err(Error::Format(format!("parameter `{name}` appears twice")));
            }
        }
        Ok(ParamSource { arrays: map })
    }

    pub fn take(&mut self, name: &str, shape: &[usize]) -> Result<Tensor> {
        let a = self
            .arrays
            .remove(name)
            .ok_or_else(|| Error::Format(format!("missing parameter `{name}`")))?;
        if a.shape != shape {
            return Err(Error::Format(format!(
                "parameter `{name}` has shape {:?}, expected {shape:?}",
                a.shape
            )));
        }
        Tensor::param(name, a.data, shape)
    }

    pub fn finish(self) -> Result<()> {
        match self.arrays.keys().next() {
            Some(k) => Err(Error::Format(format!("unexpected parameter `{k}`"))),
            None => Ok(()),
        }
    }
}

/// `x · W + b` with `W` stored `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: Tensor,
    pub b: Tensor,
}

impl Linear {
    pub(crate) fn init(name: &str, rng: &mut ChaCha8Rng, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Linear {
            w: Tensor::param(format!("{name}.w"), glorot(rng, d_in, d_out), &[d_in, d_out])?,
            b: Tensor::param(format!("{name}.b"), vec![0.0; d_out], &[d_out])?,
        })
    }

    pub(crate) fn load(name: &str, src: &mut ParamSource, d_in: usize, d_out: usize) -> Result<Self> {
        Ok(Linear {
            w: src.take(&format!("{name}.w"), &[d_in, d_out])?,
            b: src.take(&format!("{name}.b"), &[d_out])?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.matmul(&self.w)?.add_bias(&self.b)
    }

    pub(crate) fn collect(&self, out: &mut ParamList) {
        out.push(&self.w);
        out.push(&self.b);
    }
}

#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: Tensor,
    pub bias: Tensor,
}

impl LayerNorm {
    pub(crate) fn init(name: &str, d: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: Tensor::param(format!("{name}.gain"), vec![1.0; d], &[d])?,
            bias: Tensor::param(format!("{name}.bias"), vec![0.0; d], &[d])?,
        })
    }

    pub(crate) fn load(name: &str, src: &mut ParamSource, d: usize) -> Result<Self> {
        Ok(LayerNorm {
            gain: src.take(&format!("{name}.gain"), &[d])?,
            bias: src.take(&format!("{name}.bias"), &[d])?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        x.layer_norm(&self.gain, &self.bias, LAYER_NORM_EPS)
    }

    pub(crate) fn collect(&self, out: &mut ParamList) {
        out.push(&self.gain);
        out.push(&self.bias);
    }
}

/// Position-wise `relu(x W1 + b1) W2 + b2`.
#[derive(Debug, Clone)]
pub struct FeedForward {
    pub inner: Linear,
    pub outer: Linear,
}

impl FeedForward {
    pub(crate) fn init(name: &str, rng: &mut ChaCha8Rng, d: usize, d_ff: usize) -> Result<Self> {
        Ok(FeedForward {
            inner: Linear::init(&format!("{name}.inner"), rng, d, d_ff)?,
            outer: Linear::init(&format!("{name}.outer"), rng, d_ff, d)?,
        })
    }

    pub(crate) fn load(name: &str, src: &mut ParamSource, d: usize, d_ff: usize) -> Result<Self> {
        Ok(FeedForward {
            inner: Linear::load(&format!("{name}.inner"), src, d, d_ff)?,
            outer: Linear::load(&format!("{name}.outer"), src, d_ff, d)?,
        })
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        self.outer.forward(&self.inner.forward(x)?.relu())
    }

    pub(crate) fn collect(&self, out: &mut ParamList) {
        self.inner.collect(out);
        self.outer.collect(out);
    }
}

/// Which keys a query row may look at.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AttnMask {
    pub q_len: usize,
    pub k_len: usize,
    /// Keys at positions `>= key_valid` are padding.
    pub key_valid: usize,
    /// Query `i` sees only keys `<= i`.
    pub causal: bool,
}

impl AttnMask {
    /// Row-major `[q_len, k_len]`, `true` = masked out.
    pub fn to_bools(&self) -> Vec<bool> {
        let mut m = Vec::with_capacity(self.q_len * self.k_len);
        for i in 0..self.q_len {
            for j in 0..self.k_len {
                m.push(j >= self.key_valid || (self.causal && j > i));
            }
        }
        m
    }
}

/// Output of one multi-head attention block.
#[derive(Debug, Clone)]
pub struct MhaOutput {
    /// After the output projection, `[len_q, d_model]`.
    pub out: Tensor,
    /// Each head after value mixing, before the output projection,
    /// `[len_q, d_head]`.
    pub per_head: Vec<Tensor>,
}

#[derive(Debug, Clone)]
pub struct MultiHeadAttention {
    pub query: Linear,
    pub key: Linear,
    pub value: Linear,
    pub output: Linear,
    pub n_heads: usize,
}

impl MultiHeadAttention {
    pub(crate) fn init(name: &str, rng: &mut ChaCha8Rng, d: usize, n_heads: usize) -> Result<Self> {
        Ok(MultiHeadAttention {
            query: Linear::init(&format!("{name}.query"), rng, d, d)?,
            key: Linear::init(&format!("{name}.key"), rng, d, d)?,
            value: Linear::init(&format!("{name}.value"), rng, d, d)?,
            output: Linear::init(&format!("{name}.output"), rng, d, d)?,
            n_heads,
        })
    }

    pub(crate) fn load(name: &str, src: &mut ParamSource, d: usize, n_heads: usize) -> Result<Self> {
        Ok(MultiHeadAttention {
            query: Linear::load(&format!("{name}.query"), src, d, d)?,
            key: Linear::load(&format!("{name}.key"), src, d, d)?,
            value: Linear::load(&format!("{name}.value"), src, d, d)?,
            output: Linear::load(&format!("{name}.output"), src, d, d)?,
            n_heads,
        })
    }

    pub(crate) fn collect(&self, out: &mut ParamList) {
        for l in [&self.query, &self.key, &self.value, &self.output] {
            l.collect(out);
        }
    }

    /// Scaled dot-product attention over `n_heads` heads.
    ///
    /// `mask` is row-major `[len_q, len_k]` with `true` marking forbidden
    /// keys; masked scores are filled with [`MASK_FILL`] before the softmax.
    pub fn forward(&self, q_in: &Tensor, k_in: &Tensor, v_in: &Tensor, mask: Option<&[bool]>) -> Result<MhaOutput> {
        let (lq, lk) = (q_in.rows(), k_in.rows());
        if v_in.rows() != lk {
            return Err(Error::shape("mha", k_in.shape(), v_in.shape()));
        }
        if let Some(m) = mask {
            if m.len() != lq * lk {
                return Err(Error::shape("mha mask", &[lq, lk], &[m.len()]));
            }
        }
        let q = self.query.forward(q_in)?;
        let k = self.key.forward(k_in)?;
        let v = self.value.forward(v_in)?;
        let d = q.cols();
        let dh = d / self.n_heads;
        let scale = 1.0 / (dh as f32).sqrt();
        let mut per_head = Vec::with_capacity(self.n_heads);
        for h in 0..self.n_heads {
            let (lo, hi) = (h * dh, (h + 1) * dh);
            let (qh, kh, vh) = if self.n_heads == 1 {
                (q.clone(), k.clone(), v.clone())
            } else {
                (q.slice(1, lo, hi)?, k.slice(1, lo, hi)?, v.slice(1, lo, hi)?)
            };
            let mut scores = qh.matmul(&kh.transpose()?)?.scale(scale);
            if let Some(m) = mask {
                scores = scores.masked_fill(m, MASK_FILL)?;
            }
            let weights = scores.softmax(1)?;
            per_head.push(weights.matmul(&vh)?);
        }
        let out = self.combine_heads(&per_head)?;
        Ok(MhaOutput { out, per_head })
    }

    /// Concatenates per-head outputs and applies the output projection.
    pub fn combine_heads(&self, heads: &[Tensor]) -> Result<Tensor> {
        if heads.len() != self.n_heads {
            return Err(Error::invalid(
                "combine_heads",
                format!("expected {} heads, got {}", self.n_heads, heads.len()),
            ));
        }
        let joined = if heads.len() == 1 { heads[0].clone() } else { Tensor::concat(heads, 1)? };
        self.output.forward(&joined)
    }
}

/// Sinusoidal position table `[max_len, d_model]`:
/// `PE[p, 2i] = sin(p / 10000^(2i/d))`, `PE[p, 2i+1] = cos(same)`.
pub fn sinusoidal_positional_encoding(max_len: usize, d_model: usize) -> Result<Tensor> {
    if d_model % 2 != 0 || d_model == 0 {
        return Err(Error::invalid("positional_encoding", format!("d_model {d_model} must be even")));
    }
    if max_len == 0 {
        return Err(Error::invalid("positional_encoding", "max_len must be positive"));
    }
    let mut pe = vec![0f32; max_len * d_model];
    for pos in 0..max_len {
        for i in 0..d_model / 2 {
            let angle = pos as f64 / 10000f64.powf(2.0 * i as f64 / d_model as f64);
            pe[pos * d_model + 2 * i] = angle.sin() as f32;
            pe[pos * d_model + 2 * i + 1] = angle.cos() as f32;
        }
    }
    Tensor::new(pe, &[max_len, d_model])
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn positional_table_values() {
        let pe = sinusoidal_positional_encoding(4, 8).unwrap();
        let d = pe.to_vec();
        for i in 0..4 {
            assert_eq!(d[2 * i], 0.0);
            assert_eq!(d[2 * i + 1], 1.0);
        }
        assert!((d[8] - 0.841_470_96).abs() < 1e-6);
        assert!(sinusoidal_positional_encoding(4, 7).is_err());
    }

    fn mha(d: usize, heads: usize) -> MultiHeadAttention {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        MultiHeadAttention::init("a", &mut rng, d, heads).unwrap()
    }

    fn rand_t(rng: &mut ChaCha8Rng, r: usize, c: usize) -> Tensor {
        Tensor::new((0..r * c).map(|_| rng.gen_range(-1.0..1.0)).collect(), &[r, c]).unwrap()
    }

    #[test]
    fn single_position_attends_to_itself() {
        let a = mha(8, 2);
        let x = Tensor::new((0..8).map(|v| v as f32 * 0.1).collect(), &[1, 8]).unwrap();
        let out = a.forward(&x, &x, &x, None).unwrap();
        // weight 1 on the only key → each head equals its value slice
        let v = a.value.forward(&x).unwrap().to_vec();
        assert_eq!(out.per_head[0].to_vec(), v[..4].to_vec());
        assert_eq!(out.per_head[1].to_vec(), v[4..].to_vec());
    }

    #[test]
    fn padded_keys_get_no_weight() {
        let a = mha(8, 2);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = rand_t(&mut rng, 5, 8);
        let mask = AttnMask { q_len: 5, k_len: 5, key_valid: 3, causal: false };
        let base = a.forward(&x, &x, &x, Some(&mask.to_bools())).unwrap();
        // perturb padded rows: real query rows must not move
        let mut xd = x.to_vec();
        for v in &mut xd[3 * 8..] {
            *v += 10.0;
        }
        let x2 = Tensor::new(xd, &[5, 8]).unwrap();
        let pert = a.forward(&x2, &x2, &x2, Some(&mask.to_bools())).unwrap();
        assert_eq!(base.out.to_vec()[..3 * 8], pert.out.to_vec()[..3 * 8]);
    }

    #[test]
    fn causal_rows_ignore_future() {
        let a = mha(8, 4);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = rand_t(&mut rng, 6, 8);
        let m = AttnMask { q_len: 6, k_len: 6, key_valid: 6, causal: true }.to_bools();
        let base = a.forward(&x, &x, &x, Some(&m)).unwrap().out.to_vec();
        for t in 0..6 {
            let mut xd = x.to_vec();
            for v in &mut xd[(t + 1) * 8..] {
                *v = rng.gen_range(-3.0..3.0);
            }
            let x2 = Tensor::new(xd, &[6, 8]).unwrap();
            let got = a.forward(&x2, &x2, &x2, Some(&m)).unwrap().out.to_vec();
            assert_eq!(got[..(t + 1) * 8], base[..(t + 1) * 8]);
        }
    }

    #[test]
    fn mask_shape_is_checked() {
        let a = mha(8, 2);
        let x = Tensor::zeros(&[3, 8]);
        assert!(a.forward(&x, &x, &x, Some(&[false; 4])).is_err());
    }
}
