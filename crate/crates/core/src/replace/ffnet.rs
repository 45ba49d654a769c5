use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::Tensor;
use crate::container::{self, NamedArray};
use crate::error::{Error, Result};
use crate::model::{AttentionSite, Linear, SiteKind, TransformerConfig};
use crate::replace::method::ReplacementMethod;
use crate::replace::size::{hidden_width_for_budget, param_count, SizeClass};

/// Dimensions and provenance of one student network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FFReplacementSpec {
    pub site: AttentionSite,
    pub method: ReplacementMethod,
    pub size: SizeClass,
    pub d_in: usize,
    pub d_hidden: usize,
    pub d_out: usize,
    /// 1, or the teacher's head count for ASLR.
    pub heads: usize,
    /// Which head this network mimics (0 unless ASLR).
    pub head: usize,
    pub max_len: usize,
    pub d_model: usize,
}

impl FFReplacementSpec {
    pub fn new(
        method: ReplacementMethod,
        site: AttentionSite,
        size: SizeClass,
        config: &TransformerConfig,
        head: usize,
    ) -> Result<Self> {
        method.check_site(site)?;
        site.check(config)?;
        let heads = if method == ReplacementMethod::Aslr { config.n_heads } else { 1 };
        if head >= heads {
            return Err(Error::Config(format!("head {head} out of range for {heads}")));
        }
        let width = config.max_len * (config.d_model / heads);
        let d_in = if site.kind == SiteKind::DecoderCross { 2 * width } else { width };
        let d_out = width;
        let d_hidden = hidden_width_for_budget(d_in, d_out, size.budget)?;
        Ok(FFReplacementSpec {
            site,
            method,
            size,
            d_in,
            d_hidden,
            d_out,
            heads,
            head,
            max_len: config.max_len,
            d_model: config.d_model,
        })
    }

    pub fn param_count(&self) -> usize {
        param_count(self.d_in, self.d_hidden, self.d_out)
    }

    /// Signed relative deviation of the realised count from the budget.
    pub fn budget_deviation(&self) -> f64 {
        (self.param_count() as f64 - self.size.budget as f64) / self.size.budget as f64
    }
}

/// A network that maps flattened inputs to flattened outputs, row by row.
pub trait Student {
    fn d_in(&self) -> usize;
    fn d_out(&self) -> usize;
    /// Hash of the teacher whose activations this student was fit to.
    fn teacher_hash(&self) -> &str;
    /// `[batch, d_in] → [batch, d_out]`
    fn forward(&self, input: &Tensor) -> Result<Tensor>;
}

/// One-hidden-layer ReLU network.
#[derive(Debug, Clone)]
pub struct FFNet {
    pub spec: FFReplacementSpec,
    pub hidden: Linear,
    pub output: Linear,
    pub teacher_hash: String,
}

impl FFNet {
    /// Glorot-uniform weights, zero biases.
    pub fn init(spec: FFReplacementSpec, teacher_hash: impl Into<String>, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let hidden = Linear::init("hidden", &mut rng, spec.d_in, spec.d_hidden)?;
        let output = Linear::init("output", &mut rng, spec.d_hidden, spec.d_out)?;
        Ok(FFNet {
            spec,
            hidden,
            output,
            teacher_hash: teacher_hash.into(),
        })
    }

    pub fn params(&self) -> Vec<Tensor> {
        vec![
            self.hidden.w.clone(),
            self.hidden.b.clone(),
            self.output.w.clone(),
            self.output.b.clone(),
        ]
    }

    pub fn num_params(&self) -> usize {
        self.params().iter().map(Tensor::numel).sum()
    }

    fn to_arrays(&self, prefix: &str) -> Vec<NamedArray> {
        self.params()
            .iter()
            .map(|t| NamedArray::new(format!("{prefix}{}", t.name().unwrap()), t.shape().to_vec(), t.to_vec()))
            .collect()
    }

    fn from_arrays(
        spec: FFReplacementSpec,
        teacher_hash: String,
        prefix: &str,
        arrays: &mut Vec<NamedArray>,
    ) -> Result<Self> {
        let mut take = |name: &str, shape: &[usize]| -> Result<Tensor> {
            let a = container::take_named(arrays, &format!("{prefix}{name}"))?;
            if a.shape != shape {
                return Err(Error::Format(format!("`{prefix}{name}` has shape {:?}, expected {shape:?}", a.shape)));
            }
            Tensor::param(name, a.data, shape)
        };
        let hidden = Linear {
            w: take("hidden.w", &[spec.d_in, spec.d_hidden])?,
            b: take("hidden.b", &[spec.d_hidden])?,
        };
        let output = Linear {
            w: take("output.w", &[spec.d_hidden, spec.d_out])?,
            b: take("output.b", &[spec.d_out])?,
        };
        Ok(FFNet {
            spec,
            hidden,
            output,
            teacher_hash,
        })
    }
}

impl Student for FFNet {
    fn d_in(&self) -> usize {
        self.spec.d_in
    }

    fn d_out(&self) -> usize {
        self.spec.d_out
    }

    fn teacher_hash(&self) -> &str {
        &self.teacher_hash
    }

    fn forward(&self, input: &Tensor) -> Result<Tensor> {
        if input.cols() != self.spec.d_in {
            return Err(Error::shape("ffnet", input.shape(), &[self.spec.d_in]));
        }
        self.output.forward(&self.hidden.forward(input)?.relu())
    }
}

/// Builds the untrained student(s) for one site: a single network, or one per
/// head for ASLR.
pub fn build_replacement(
    method: ReplacementMethod,
    site: AttentionSite,
    size: SizeClass,
    config: &TransformerConfig,
    teacher_hash: &str,
    seed: u64,
) -> Result<Vec<FFNet>> {
    method.check_site(site)?;
    let heads = if method == ReplacementMethod::Aslr { config.n_heads } else { 1 };
    (0..heads)
        .map(|h| {
            let spec = FFReplacementSpec::new(method, site, size, config, h)?;
            FFNet::init(spec, teacher_hash, seed.wrapping_add(h as u64))
        })
        .collect()
}

pub const STUDENT_FORMAT: &str = "attentionless/students";

#[derive(Debug, Serialize, Deserialize)]
struct StudentHeader {
    format: String,
    version: u32,
    teacher_hash: String,
    specs: Vec<FFReplacementSpec>,
    loss_curves: Vec<Vec<f32>>,
}

/// The trained students for one (site, method, size), as stored on disk.
#[derive(Debug, Clone)]
pub struct StudentSet {
    pub nets: Vec<FFNet>,
    /// Per-network training loss per epoch.
    pub loss_curves: Vec<Vec<f32>>,
}

impl StudentSet {
    pub fn site(&self) -> AttentionSite {
        self.nets[0].spec.site
    }

    pub fn method(&self) -> ReplacementMethod {
        self.nets[0].spec.method
    }

    pub fn teacher_hash(&self) -> &str {
        &self.nets[0].teacher_hash
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.nets.is_empty() {
            return Err(Error::Format("empty student set".into()));
        }
        let header = StudentHeader {
            format: STUDENT_FORMAT.into(),
            version: 1,
            teacher_hash: self.teacher_hash().to_owned(),
            specs: self.nets.iter().map(|n| n.spec.clone()).collect(),
            loss_curves: self.loss_curves.clone(),
        };
        let arrays: Vec<NamedArray> =
            self.nets.iter().enumerate().flat_map(|(i, n)| n.to_arrays(&format!("net{i}."))).collect();
        container::encode(&header, &arrays)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let (h, mut arrays): (StudentHeader, _) = container::decode(bytes)?;
        if h.format != STUDENT_FORMAT {
            return Err(Error::Format(format!("expected {STUDENT_FORMAT}, found {}", h.format)));
        }
        let nets = h
            .specs
            .into_iter()
            .enumerate()
            .map(|(i, spec)| FFNet::from_arrays(spec, h.teacher_hash.clone(), &format!("net{i}."), &mut arrays))
            .collect::<Result<Vec<_>>>()?;
        if nets.is_empty() {
            return Err(Error::Format("student file holds no networks".into()));
        }
        Ok(StudentSet {
            nets,
            loss_curves: h.loss_curves,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        if let Some(dir) = path.parent() {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::replace::size::{SizeLabel, SizeLadder};

    fn reference_config() -> TransformerConfig {
        TransformerConfig {
            src_vocab: 100,
            tgt_vocab: 100,
            ..Default::default()
        }
    }

    #[test]
    fn aslr_builds_one_net_per_head() {
        let cfg = TransformerConfig {
            d_model: 16,
            n_heads: 8,
            max_len: 5,
            n_layers: 1,
            src_vocab: 10,
            tgt_vocab: 10,
            ..Default::default()
        };
        let site = AttentionSite::new(SiteKind::EncoderSelf, 0);
        let size = SizeClass { label: SizeLabel::XS, budget: 500 };
        let nets = build_replacement(ReplacementMethod::Aslr, site, size, &cfg, "t", 0).unwrap();
        assert_eq!(nets.len(), 8);
        for (h, n) in nets.iter().enumerate() {
            assert_eq!((n.spec.d_in, n.spec.d_out, n.spec.head), (5 * 2, 5 * 2, h));
        }
    }

    #[test]
    fn reference_alr_xs_spec() {
        let cfg = reference_config();
        let site = AttentionSite::new(SiteKind::EncoderSelf, 0);
        let size = SizeLadder::reference().size(ReplacementMethod::Alr, SizeLabel::XS);
        let spec = FFReplacementSpec::new(ReplacementMethod::Alr, site, size, &cfg, 0).unwrap();
        assert_eq!((spec.d_in, spec.d_out), (6400, 6400));
        assert!(spec.budget_deviation().abs() < 0.02);
    }

    #[test]
    fn cross_site_doubles_input() {
        let cfg = reference_config();
        let site = AttentionSite::new(SiteKind::DecoderCross, 3);
        let size = SizeLadder::reference().size(ReplacementMethod::Alr, SizeLabel::XS);
        let spec = FFReplacementSpec::new(ReplacementMethod::Alr, site, size, &cfg, 0).unwrap();
        assert_eq!((spec.d_in, spec.d_out), (12_800, 6400));
        assert!(spec.budget_deviation().abs() < 0.05);
    }

    #[test]
    fn elr_at_decoder_is_rejected() {
        let cfg = reference_config();
        let site = AttentionSite::new(SiteKind::DecoderCross, 0);
        let size = SizeClass { label: SizeLabel::XS, budget: 320_000 };
        assert!(matches!(
            build_replacement(ReplacementMethod::Elr, site, size, &cfg, "t", 0),
            Err(Error::InvalidMethod { .. })
        ));
    }

    #[test]
    fn student_set_round_trip() {
        let cfg = TransformerConfig {
            d_model: 4,
            n_heads: 2,
            max_len: 3,
            n_layers: 1,
            src_vocab: 10,
            tgt_vocab: 10,
            ..Default::default()
        };
        let site = AttentionSite::new(SiteKind::DecoderSelf, 0);
        let size = SizeClass { label: SizeLabel::S, budget: 200 };
        let nets = build_replacement(ReplacementMethod::Aslr, site, size, &cfg, "abc", 4).unwrap();
        let set = StudentSet { nets, loss_curves: vec![vec![0.5, 0.25], vec![0.4, 0.2]] };
        let bytes = set.to_bytes().unwrap();
        let back = StudentSet::from_bytes(&bytes).unwrap();
        assert_eq!(back.to_bytes().unwrap(), bytes);
        assert_eq!(back.teacher_hash(), "abc");
        let x = Tensor::new(vec![0.3; 2 * 6], &[2, 6]).unwrap();
        assert_eq!(back.nets[1].forward(&x).unwrap().to_vec(), set.nets[1].forward(&x).unwrap().to_vec());
    }
}
