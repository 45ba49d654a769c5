//! Dense row-major kernels. All reductions accumulate in f64 and round once
//! on store.

/// `a[n,k] · b[k,m]`
pub(crate) fn gemm_nn(a: &[f32], b: &[f32], n: usize, k: usize, m: usize) -> Vec<f32> {
    let mut out = vec![0f32; n * m];
    let mut acc = vec![0f64; m];
    for i in 0..n {
        acc.iter_mut().for_each(|v| *v = 0.0);
        let arow = &a[i * k..(i + 1) * k];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let av = av as f64;
            let brow = &b[p * m..(p + 1) * m];
            for (acc_j, &bv) in acc.iter_mut().zip(brow) {
                *acc_j += av * bv as f64;
            }
        }
        for (o, &v) in out[i * m..(i + 1) * m].iter_mut().zip(&acc) {
            *o = v as f32;
        }
    }
    out
}

/// `a[n,m] · b[k,m]ᵀ` → `[n,k]`
pub(crate) fn gemm_nt(a: &[f32], b: &[f32], n: usize, m: usize, k: usize) -> Vec<f32> {
    let mut out = vec![0f32; n * k];
    for i in 0..n {
        let arow = &a[i * m..(i + 1) * m];
        for p in 0..k {
            let brow = &b[p * m..(p + 1) * m];
            let mut acc = 0f64;
            for (&x, &y) in arow.iter().zip(brow) {
                acc += x as f64 * y as f64;
            }
            out[i * k + p] = acc as f32;
        }
    }
    out
}

/// `a[n,k]ᵀ · b[n,m]` → `[k,m]`
pub(crate) fn gemm_tn(a: &[f32], b: &[f32], n: usize, k: usize, m: usize) -> Vec<f32> {
    let mut acc = vec![0f64; k * m];
    for i in 0..n {
        let arow = &a[i * k..(i + 1) * k];
        let brow = &b[i * m..(i + 1) * m];
        for (p, &av) in arow.iter().enumerate() {
            if av == 0.0 {
                continue;
            }
            let av = av as f64;
            for (acc_j, &bv) in acc[p * m..(p + 1) * m].iter_mut().zip(brow) {
                *acc_j += av * bv as f64;
            }
        }
    }
    acc.into_iter().map(|v| v as f32).collect()
}

pub(crate) fn transpose(a: &[f32], rows: usize, cols: usize) -> Vec<f32> {
    let mut out = vec![0f32; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = a[r * cols + c];
        }
    }
    out
}

/// Splits a shape around `axis` into (outer, axis length, inner).
pub(crate) fn axis_split(shape: &[usize], axis: usize) -> (usize, usize, usize) {
    let outer = shape[..axis].iter().product();
    let inner = shape[axis + 1..].iter().product();
    (outer, shape[axis], inner)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gemm_variants_agree_with_naive() {
        let a: Vec<f32> = (0..6).map(|v| v as f32 * 0.5 - 1.0).collect(); // 2x3
        let b: Vec<f32> = (0..12).map(|v| (v as f32).sin()).collect(); // 3x4
        let c = gemm_nn(&a, &b, 2, 3, 4);
        for i in 0..2 {
            for j in 0..4 {
                let want: f32 = (0..3).map(|p| a[i * 3 + p] * b[p * 4 + j]).sum();
                assert!((c[i * 4 + j] - want).abs() < 1e-6);
            }
        }
        let bt = transpose(&b, 3, 4);
        assert_eq!(gemm_nt(&a, &bt, 2, 3, 4), c);
        let at = transpose(&a, 2, 3);
        assert_eq!(gemm_tn(&at, &b, 3, 2, 4), c);
    }
}
