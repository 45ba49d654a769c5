use attentionless::autograd::{gradcheck, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn param(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::param("p", (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect(), shape).unwrap()
}

#[test]
fn matmul_three_by_four_times_four_by_two() {
    let mut rng = ChaCha8Rng::seed_from_u64(0);
    let (a, b) = (param(&mut rng, &[3, 4]), param(&mut rng, &[4, 2]));
    let r = param(&mut rng, &[3, 2]).detach();
    let err = gradcheck(&[a, b], |x| Ok(x[0].matmul(&x[1])?.mul(&r)?.sum()), 1e-3).unwrap();
    assert!(err < 1e-3, "{err:e}");
}

#[test]
fn two_layer_relu_regression_loss() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let x = param(&mut rng, &[5, 3]).detach();
    let y = param(&mut rng, &[5, 2]).detach();
    let params = vec![
        param(&mut rng, &[3, 6]),
        param(&mut rng, &[6]),
        param(&mut rng, &[6, 2]),
        param(&mut rng, &[2]),
    ];
    let mask = vec![true; 10];
    let loss = |p: &[Tensor]| {
        let h = x.matmul(&p[0])?.add_bias(&p[1])?.relu();
        Tensor::mse_masked(&h.matmul(&p[2])?.add_bias(&p[3])?, &y, &mask)
    };
    let err = gradcheck(&params, loss, 1e-3).unwrap();
    assert!(err < 1e-3, "{err:e}");
}
