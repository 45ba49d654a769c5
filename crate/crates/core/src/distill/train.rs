use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::autograd::{adam_step, AdamState, Tensor};
use crate::distill::dataset::ActivationDataset;
use crate::error::{Error, Result};
use crate::model::TransformerConfig;
use crate::replace::{build_replacement, FFNet, SizeClass, Student, StudentSet};

/// Student optimisation settings. `batch_size` counts records.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DistillConfig {
    pub epochs: usize,
    pub lr: f32,
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DistillConfig {
    fn default() -> Self {
        DistillConfig {
            epochs: 20,
            lr: 1e-3,
            batch_size: 1400,
            seed: 0,
        }
    }
}

impl DistillConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || !(self.lr > 0.0) || self.batch_size == 0 {
            return Err(Error::Config("distill epochs, lr and batch_size must be positive".into()));
        }
        Ok(())
    }
}

fn check_compatible(net: &FFNet, data: &ActivationDataset, stream: usize) -> Result<()> {
    let h = &data.header;
    if stream >= h.streams {
        return Err(Error::invalid("train_replacement", format!("stream {stream} of {}", h.streams)));
    }
    if net.d_in() != h.d_in || net.d_out() != h.d_out {
        return Err(Error::shape("train_replacement", &[net.d_in(), net.d_out()], &[h.d_in, h.d_out]));
    }
    if net.spec.site != h.site || net.spec.method != h.method {
        return Err(Error::invalid(
            "train_replacement",
            format!("student for {} {} given data for {} {}", net.spec.method, net.spec.site, h.method, h.site),
        ));
    }
    if net.teacher_hash != h.teacher_hash {
        return Err(Error::TeacherMismatch {
            expected: net.teacher_hash.clone(),
            found: h.teacher_hash.clone(),
        });
    }
    Ok(())
}

/// Fits `net` to one stream of `data` by masked MSE with Adam.
///
/// Returns the mean loss of every epoch. Padded output coordinates carry no
/// loss and receive no gradient.
pub fn train_replacement(
    net: &FFNet,
    data: &ActivationDataset,
    stream: usize,
    cfg: &DistillConfig,
    mut on_epoch: impl FnMut(usize, f32),
) -> Result<Vec<f32>> {
    cfg.validate()?;
    check_compatible(net, data, stream)?;
    if data.is_empty() {
        return Err(Error::invalid("train_replacement", "empty activation dataset"));
    }
    let (d_in, d_out, d_row) = (data.header.d_in, data.header.d_out, data.header.d_row());
    let params = net.params();
    let mut states = AdamState::for_params(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0f64;
        let mut weight = 0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let b = chunk.len();
            let mut input = vec![0f32; b * d_in];
            let mut target = vec![0f32; b * d_out];
            let mut mask = vec![false; b * d_out];
            for (r, &i) in chunk.iter().enumerate() {
                let rows = data.fill(
                    stream,
                    i,
                    &mut input[r * d_in..(r + 1) * d_in],
                    &mut target[r * d_out..(r + 1) * d_out],
                );
                mask[r * d_out..r * d_out + rows * d_row].fill(true);
            }
            let real = mask.iter().filter(|&&m| m).count();
            let x = Tensor::new(input, &[b, d_in])?;
            let y = Tensor::new(target, &[b, d_out])?;
            let loss = Tensor::mse_masked(&net.forward(&x)?, &y, &mask)?;
            let value = loss.item();
            if !value.is_finite() {
                return Err(Error::Diverged { epoch, loss: value });
            }
            loss.backward()?;
            adam_step(&params, &mut states, cfg.lr)?;
            total += value as f64 * real as f64;
            weight += real as f64;
        }
        let mean = (total / weight.max(1.0)) as f32;
        curve.push(mean);
        on_epoch(epoch, mean);
    }
    Ok(curve)
}

/// Builds and trains every student for the dataset's site and method: one
/// network, or one per head for ASLR.
pub fn distill_students(
    data: &ActivationDataset,
    size: SizeClass,
    config: &TransformerConfig,
    cfg: &DistillConfig,
    mut on_epoch: impl FnMut(usize, usize, f32),
) -> Result<StudentSet> {
    let h = &data.header;
    let nets = build_replacement(h.method, h.site, size, config, &h.teacher_hash, cfg.seed)?;
    let mut curves = Vec::with_capacity(nets.len());
    for (k, net) in nets.iter().enumerate() {
        let per_net = DistillConfig {
            seed: cfg.seed.wrapping_add(k as u64),
            ..cfg.clone()
        };
        curves.push(train_replacement(net, data, k, &per_net, |e, l| on_epoch(k, e, l))?);
    }
    Ok(StudentSet {
        nets,
        loss_curves: curves,
    })
}
