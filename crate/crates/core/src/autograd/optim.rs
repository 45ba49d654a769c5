use serde::{Deserialize, Serialize};

use crate::autograd::tensor::Tensor;
use crate::error::{Error, Result};

/// Per-parameter Adam moments.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamState {
    pub step: u64,
    pub m: Vec<f32>,
    pub v: Vec<f32>,
    pub beta1: f32,
    pub beta2: f32,
    pub eps: f32,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self::with_betas(len, 0.9, 0.999, 1e-8)
    }

    pub fn with_betas(len: usize, beta1: f32, beta2: f32, eps: f32) -> Self {
        AdamState {
            step: 0,
            m: vec![0.0; len],
            v: vec![0.0; len],
            beta1,
            beta2,
            eps,
        }
    }

    pub fn for_params(params: &[Tensor]) -> Vec<AdamState> {
        params.iter().map(|p| AdamState::new(p.numel())).collect()
    }
}

fn param_name(p: &Tensor, idx: usize) -> String {
    p.name().map(str::to_owned).unwrap_or_else(|| format!("#{idx}"))
}

/// One bias-corrected Adam update of every parameter, then clears the grads.
///
/// Fails before touching anything if some parameter has no gradient.
pub fn adam_step(params: &[Tensor], states: &mut [AdamState], lr: f32) -> Result<()> {
    if params.len() != states.len() {
        return Err(Error::invalid(
            "adam_step",
            format!("{} params but {} states", params.len(), states.len()),
        ));
    }
    for (i, (p, s)) in params.iter().zip(states.iter()).enumerate() {
        if p.0.grad.borrow().is_none() {
            return Err(Error::MissingGrad(param_name(p, i)));
        }
        if s.m.len() != p.numel() || s.v.len() != p.numel() {
            return Err(Error::shape("adam_step", p.shape(), &[s.m.len()]));
        }
    }
    for (p, s) in params.iter().zip(states.iter_mut()) {
        let grad = p.0.grad.borrow_mut().take().expect("checked above");
        s.step += 1;
        let (b1, b2) = (s.beta1 as f64, s.beta2 as f64);
        let bc1 = 1.0 - b1.powi(s.step as i32);
        let bc2 = 1.0 - b2.powi(s.step as i32);
        let (lr, eps) = (lr as f64, s.eps as f64);
        p.update_data(|data| {
            for (((x, &g), m), v) in data.iter_mut().zip(&grad).zip(s.m.iter_mut()).zip(s.v.iter_mut()) {
                let g = g as f64;
                let m_new = b1 * *m as f64 + (1.0 - b1) * g;
                let v_new = b2 * *v as f64 + (1.0 - b2) * g * g;
                *m = m_new as f32;
                *v = v_new as f32;
                let m_hat = m_new / bc1;
                let v_hat = v_new / bc2;
                *x = (*x as f64 - lr * m_hat / (v_hat.sqrt() + eps)) as f32;
            }
        });
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn first_step_moves_by_lr() {
        let p = Tensor::param("p", vec![1.0], &[1]).unwrap();
        p.set_grad(Some(vec![1.0])).unwrap();
        let mut st = vec![AdamState::new(1)];
        adam_step(&[p.clone()], &mut st, 0.001).unwrap();
        // m̂ = 1, v̂ = 1 → p − 0.001·1/(1 + 1e-8)
        let want = 1.0f64 - 0.001 / (1.0 + 1e-8);
        assert!((p.item() as f64 - want).abs() < 1e-7, "{}", p.item());
        assert_eq!(st[0].step, 1);
        assert!(p.grad().is_none());
    }

    #[test]
    fn zero_grad_leaves_param_and_decays_moments() {
        let p = Tensor::param("p", vec![0.5, -2.0], &[2]).unwrap();
        let mut st = vec![AdamState::new(2)];
        st[0].m = vec![0.2, -0.4];
        st[0].v = vec![0.01, 0.02];
        st[0].step = 3;
        // with nonzero m the update would move p; only check the moments here
        p.set_grad(Some(vec![0.0, 0.0])).unwrap();
        let mut fresh = vec![AdamState::new(2)];
        let q = Tensor::param("q", vec![0.5, -2.0], &[2]).unwrap();
        q.set_grad(Some(vec![0.0, 0.0])).unwrap();
        adam_step(&[q.clone()], &mut fresh, 0.01).unwrap();
        assert_eq!(q.to_vec(), vec![0.5, -2.0]);

        adam_step(&[p], &mut st, 0.01).unwrap();
        assert!(st[0].m[0].abs() < 0.2 && st[0].m[1].abs() < 0.4);
        assert!(st[0].v[0] < 0.01 && st[0].v[1] < 0.02);
    }

    #[test]
    fn missing_grad_names_parameter() {
        let a = Tensor::param("enc.0.w", vec![1.0], &[1]).unwrap();
        let b = Tensor::param("dec.1.bias", vec![1.0], &[1]).unwrap();
        a.set_grad(Some(vec![1.0])).unwrap();
        let mut st = AdamState::for_params(&[a.clone(), b.clone()]);
        let err = adam_step(&[a.clone(), b], &mut st, 0.1).unwrap_err();
        assert!(err.to_string().contains("dec.1.bias"), "{err}");
        // nothing was updated
        assert_eq!(a.item(), 1.0);
        assert_eq!(st[0].step, 0);
    }

    #[test]
    fn identical_params_stay_identical() {
        let a = Tensor::param("a", vec![0.3, -0.7, 1.1], &[3]).unwrap();
        let b = Tensor::param("b", vec![0.3, -0.7, 1.1], &[3]).unwrap();
        let mut st = AdamState::for_params(&[a.clone(), b.clone()]);
        for k in 0..25 {
            let g: Vec<f32> = (0..3).map(|i| ((k * 3 + i) as f32).sin()).collect();
            a.set_grad(Some(g.clone())).unwrap();
            b.set_grad(Some(g)).unwrap();
            adam_step(&[a.clone(), b.clone()], &mut st, 0.01).unwrap();
            assert_eq!(a.to_vec(), b.to_vec());
        }
    }
}
