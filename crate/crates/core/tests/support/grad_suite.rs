//! Finite-difference checks for every differentiable op, shared by the
//! gradient tests and the acceptance run.

use attentionless::autograd::{gradcheck, Tensor, LAYER_NORM_EPS};
use attentionless::Result;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Near the cube root of f32 epsilon, balancing rounding against truncation.
pub const STEP: f32 = 3e-3;
pub const TOLERANCE: f64 = 1e-3;

pub struct OpReport {
    pub op: &'static str,
    pub shapes: usize,
    pub worst: f64,
}

fn param(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    Tensor::param("x", (0..n).map(|_| rng.gen_range(-1.0f32..1.0)).collect(), shape).unwrap()
}

/// Values bounded away from zero so ReLU's kink stays out of reach of the
/// finite-difference step.
fn param_off_zero(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor {
    let n = shape.iter().product();
    let v = (0..n)
        .map(|_| {
            let m = rng.gen_range(0.1f32..1.0);
            if rng.gen::<bool>() { m } else { -m }
        })
        .collect();
    Tensor::param("x", v, shape).unwrap()
}

/// `Σ out ⊙ R` for a fixed random `R`, turning any op into a scalar loss
/// whose gradient exercises every output element.
fn projector(rng: &mut ChaCha8Rng, shape: &[usize]) -> impl Fn(&Tensor) -> Result<Tensor> {
    let r = param(rng, shape).detach();
    move |out: &Tensor| Ok(out.mul(&r)?.sum())
}

fn check(
    reports: &mut Vec<OpReport>,
    op: &'static str,
    cases: Vec<(Vec<Tensor>, Box<dyn Fn(&[Tensor]) -> Result<Tensor>>)>,
) -> Result<()> {
    let mut worst = 0f64;
    let shapes = cases.len();
    for (inputs, f) in cases {
        worst = worst.max(gradcheck(&inputs, f, STEP)?);
    }
    reports.push(OpReport { op, shapes, worst });
    Ok(())
}

type Case = (Vec<Tensor>, Box<dyn Fn(&[Tensor]) -> Result<Tensor>>);

const SHAPES: [&[usize]; 5] = [&[1], &[3], &[2, 3], &[4, 5], &[2, 3, 4]];
const MATS: [(usize, usize); 5] = [(1, 1), (2, 3), (3, 1), (4, 5), (6, 2)];

pub fn run_suite(seed: u64) -> Result<Vec<OpReport>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let rng = &mut rng;
    let mut reports = Vec::new();

    let mut cases: Vec<Case> = Vec::new();
    for (n, k, m) in [(1, 1, 1), (2, 3, 4), (5, 1, 3), (4, 6, 2), (7, 5, 3)] {
        let p = projector(rng, &[n, m]);
        cases.push((vec![param(rng, &[n, k]), param(rng, &[k, m])], Box::new(move |v| p(&v[0].matmul(&v[1])?))));
    }
    check(&mut reports, "matmul", cases)?;

    for (op, f) in [
        ("add", (|a: &Tensor, b: &Tensor| a.add(b)) as fn(&Tensor, &Tensor) -> Result<Tensor>),
        ("mul", |a: &Tensor, b: &Tensor| a.mul(b)),
    ] {
        let mut cases: Vec<Case> = Vec::new();
        for s in SHAPES {
            let p = projector(rng, s);
            cases.push((vec![param(rng, s), param(rng, s)], Box::new(move |v| p(&f(&v[0], &v[1])?))));
        }
        check(&mut reports, op, cases)?;
    }

    let mut cases: Vec<Case> = Vec::new();
    for s in SHAPES {
        let p = projector(rng, s);
        cases.push((vec![param(rng, s)], Box::new(move |v| p(&v[0].scale(-1.7)))));
    }
    check(&mut reports, "scale", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for (n, m) in MATS {
        let p = projector(rng, &[n, m]);
        cases.push((vec![param(rng, &[n, m]), param(rng, &[m])], Box::new(move |v| p(&v[0].add_bias(&v[1])?))));
    }
    check(&mut reports, "add_bias", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for s in SHAPES {
        let p = projector(rng, &[1]);
        cases.push((vec![param(rng, s)], Box::new(move |v| p(&v[0].sum()))));
    }
    check(&mut reports, "sum", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for (shapes, axis) in [
        (vec![vec![1, 2], vec![3, 2]], 0),
        (vec![vec![2, 1], vec![2, 3], vec![2, 2]], 1),
        (vec![vec![4], vec![2]], 0),
        (vec![vec![2, 2, 3], vec![2, 1, 3]], 1),
        (vec![vec![3, 3], vec![3, 3], vec![1, 3]], 0),
    ] {
        let mut out = shapes[0].clone();
        out[axis] = shapes.iter().map(|s| s[axis]).sum();
        let p = projector(rng, &out);
        let inputs = shapes.iter().map(|s| param(rng, s)).collect();
        cases.push((inputs, Box::new(move |v| p(&Tensor::concat(v, axis)?))));
    }
    check(&mut reports, "concat", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for (shape, axis, start, end) in [
        (vec![5], 0, 1, 4),
        (vec![4, 3], 0, 2, 4),
        (vec![4, 3], 1, 0, 2),
        (vec![2, 6], 1, 3, 6),
        (vec![2, 3, 4], 2, 1, 3),
    ] {
        let mut out = shape.clone();
        out[axis] = end - start;
        let p = projector(rng, &out);
        cases.push((vec![param(rng, &shape)], Box::new(move |v| p(&v[0].slice(axis, start, end)?))));
    }
    check(&mut reports, "slice", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for (from, to) in [
        (vec![6], vec![2, 3]),
        (vec![2, 3], vec![3, 2]),
        (vec![4, 5], vec![20]),
        (vec![2, 3, 4], vec![6, 4]),
        (vec![1, 7], vec![7, 1]),
    ] {
        let p = projector(rng, &to);
        cases.push((vec![param(rng, &from)], Box::new(move |v| p(&v[0].reshape(&to)?))));
    }
    check(&mut reports, "reshape", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for (n, m) in MATS {
        let p = projector(rng, &[m, n]);
        cases.push((vec![param(rng, &[n, m])], Box::new(move |v| p(&v[0].transpose()?))));
    }
    check(&mut reports, "transpose", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for s in SHAPES {
        let p = projector(rng, s);
        cases.push((vec![param_off_zero(rng, s)], Box::new(move |v| p(&v[0].relu()))));
    }
    check(&mut reports, "relu", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for (shape, axis) in [(vec![4], 0), (vec![2, 3], 1), (vec![3, 4], 0), (vec![5, 2], 1), (vec![2, 3, 4], 1)] {
        let p = projector(rng, &shape);
        cases.push((vec![param(rng, &shape)], Box::new(move |v| p(&v[0].softmax(axis)?))));
    }
    check(&mut reports, "softmax", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for (n, d) in [(1, 3), (2, 3), (3, 4), (4, 8), (2, 16)] {
        let p = projector(rng, &[n, d]);
        let inputs = vec![param(rng, &[n, d]), param(rng, &[d]), param(rng, &[d])];
        cases.push((inputs, Box::new(move |v| p(&v[0].layer_norm(&v[1], &v[2], LAYER_NORM_EPS)?))));
    }
    check(&mut reports, "layer_norm", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for s in SHAPES {
        let n: usize = s.iter().product();
        let mask: Vec<bool> = (0..n).map(|i| i % 2 == 1 || rng.gen::<bool>()).collect();
        let p = projector(rng, s);
        cases.push((vec![param(rng, s)], Box::new(move |v| p(&v[0].masked_fill(&mask, -2.5)?))));
    }
    check(&mut reports, "masked_fill", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for (vocab, d, len) in [(3, 1, 2), (5, 2, 4), (4, 3, 6), (8, 4, 3), (2, 5, 5)] {
        let ids: Vec<u32> = (0..len).map(|_| rng.gen_range(0..vocab as u32)).collect();
        let p = projector(rng, &[len, d]);
        cases.push((vec![param(rng, &[vocab, d])], Box::new(move |v| p(&Tensor::embedding(&v[0], &ids)?))));
    }
    check(&mut reports, "embedding", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for (n, v) in [(1, 2), (2, 3), (3, 5), (4, 4), (6, 7)] {
        let mut targets: Vec<u32> = (0..n).map(|_| rng.gen_range(1..v as u32)).collect();
        if n > 2 {
            targets[0] = 0;
        }
        let p = projector(rng, &[1]);
        cases.push((
            vec![param(rng, &[n, v])],
            Box::new(move |x| p(&Tensor::cross_entropy(&x[0], &targets, Some(0))?)),
        ));
    }
    check(&mut reports, "cross_entropy", cases)?;

    let mut cases: Vec<Case> = Vec::new();
    for s in SHAPES {
        let n: usize = s.iter().product();
        let mut mask: Vec<bool> = (0..n).map(|_| rng.gen::<bool>()).collect();
        mask[0] = true;
        let target = param(rng, s).detach();
        let p = projector(rng, &[1]);
        cases.push((
            vec![param(rng, s)],
            Box::new(move |x| p(&Tensor::mse_masked(&x[0], &target, &mask)?)),
        ));
    }
    check(&mut reports, "mse_masked", cases)?;

    Ok(reports)
}
