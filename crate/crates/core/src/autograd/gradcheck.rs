use crate::autograd::tensor::{no_grad, Tensor};
use crate::error::{Error, Result};

/// Compares reverse-mode gradients of a scalar function with central finite
/// differences.
///
/// Returns, over all inputs, the largest norm-wise relative error
/// `‖g_analytic − g_numeric‖ / max(‖g_analytic‖, ‖g_numeric‖)`. Inputs must
/// be parameters; their grads are cleared before and after.
pub fn gradcheck(inputs: &[Tensor], f: impl Fn(&[Tensor]) -> Result<Tensor>, h: f32) -> Result<f64> {
    for x in inputs {
        if !x.requires_grad() {
            return Err(Error::invalid("gradcheck", "inputs must require gradients"));
        }
        x.clear_grad();
    }
    let loss = f(inputs)?;
    loss.backward()?;
    let analytic: Vec<Vec<f32>> = inputs.iter().map(|x| x.grad().unwrap_or_else(|| vec![0.0; x.numel()])).collect();
    for x in inputs {
        x.clear_grad();
    }
    let eval = || -> Result<f64> { no_grad(|| Ok(f(inputs)?.item() as f64)) };
    let mut worst = 0f64;
    for (x, a) in inputs.iter().zip(&analytic) {
        let base = x.to_vec();
        let mut numeric = Vec::with_capacity(base.len());
        let mut probe = base.clone();
        for j in 0..base.len() {
            // f32 rounding makes the realised step differ from 2h; divide by
            // the step actually taken.
            let (hi, lo) = (base[j] + h, base[j] - h);
            probe[j] = hi;
            x.assign(&probe)?;
            let up = eval()?;
            probe[j] = lo;
            x.assign(&probe)?;
            let down = eval()?;
            probe[j] = base[j];
            numeric.push((up - down) / (hi as f64 - lo as f64));
        }
        x.assign(&base)?;
        let diff: f64 = a.iter().zip(&numeric).map(|(&p, &q)| (p as f64 - q).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|&p| (p as f64).powi(2)).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|q| q * q).sum::<f64>().sqrt();
        let denom = na.max(nn);
        if denom > 1e-12 {
            worst = worst.max(diff / denom);
        }
    }
    Ok(worst)
}
