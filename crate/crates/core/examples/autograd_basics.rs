//! Check a tiny two-layer ReLU regressor's gradients against finite
//! differences, then fit it with Adam.

use attentionless::autograd::{adam_step, gradcheck, AdamState, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn mlp_loss(p: &[Tensor], x: &Tensor, y: &Tensor) -> attentionless::Result<Tensor> {
    let h = x.matmul(&p[0])?.add_bias(&p[1])?.relu();
    Tensor::mse_masked(&h.matmul(&p[2])?.add_bias(&p[3])?, y, &vec![true; y.numel()])
}

fn main() -> attentionless::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let mut init = |name: &str, shape: &[usize]| {
        let n = shape.iter().product();
        Tensor::param(name, (0..n).map(|_| rng.gen_range(-0.5f32..0.5)).collect(), shape)
    };
    let w1 = init("w1", &[2, 16])?;
    let b1 = init("b1", &[16])?;
    let w2 = init("w2", &[16, 1])?;
    let b2 = init("b2", &[1])?;
    let params = vec![w1, b1, w2, b2];

    // y = x0 · x1 on a grid
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for i in 0..10 {
        for j in 0..10 {
            let (a, b) = (i as f32 / 9.0 - 0.5, j as f32 / 9.0 - 0.5);
            xs.extend([a, b]);
            ys.push(a * b);
        }
    }
    // Checked at initialisation on a few rows: near the optimum the gradient
    // is tiny, and with many rows some ReLU kink falls inside the step.
    let (x4, y4) = (Tensor::new(xs[..8].to_vec(), &[4, 2])?, Tensor::new(ys[..4].to_vec(), &[4, 1])?);
    let err = gradcheck(&params, |p| mlp_loss(p, &x4, &y4), 3e-3)?;
    println!("finite-difference relative error {err:.2e}");

    let x = Tensor::new(xs, &[100, 2])?;
    let y = Tensor::new(ys, &[100, 1])?;
    let loss_of = |p: &[Tensor]| mlp_loss(p, &x, &y);

    let mut states = AdamState::for_params(&params);
    for step in 0..=2000 {
        for p in &params {
            p.clear_grad();
        }
        let loss = loss_of(&params)?;
        loss.backward()?;
        adam_step(&params, &mut states, 1e-2)?;
        if step % 500 == 0 {
            println!("step {step:>4}  mse {:.6}", loss.item());
        }
    }

    Ok(())
}
