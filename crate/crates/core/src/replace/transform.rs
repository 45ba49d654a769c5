//! Fixed-length input/output transforms around a student network.
//!
//! A student sees a sentence as one flat vector of `max_len` rows; rows past
//! the valid length are exactly zero. These functions copy values and are not
//! differentiable: students train on captured vectors, never through a splice.

use crate::autograd::Tensor;
use crate::error::{Error, Result};

fn check_fits(len: usize, max_len: usize) -> Result<()> {
    if len > max_len {
        return Err(Error::SequenceTooLong { len, max_len });
    }
    Ok(())
}

/// Slice form of [`flatten_pad_mask`]: the first `valid` rows of a
/// row-major `[_, d]` buffer, zero-padded to `max_len · d`.
pub fn flatten_rows(rows: &[f32], d: usize, valid: usize, max_len: usize) -> Vec<f32> {
    let mut out = vec![0f32; max_len * d];
    out[..valid * d].copy_from_slice(&rows[..valid * d]);
    out
}

/// `[len, d]` → `[max_len · d]`: real rows in position order, rows at or
/// beyond `valid_len` zeroed.
pub fn flatten_pad_mask(reps: &Tensor, valid_len: usize, max_len: usize) -> Result<Tensor> {
    let (len, d) = (reps.rows(), reps.cols());
    check_fits(len, max_len)?;
    if valid_len > len {
        return Err(Error::invalid("flatten_pad_mask", format!("valid_len {valid_len} > {len} rows")));
    }
    Tensor::new(flatten_rows(&reps.data(), d, valid_len, max_len), &[max_len * d])
}

/// `[max_len · d]` → `[valid_len, d]`, discarding the padded tail.
pub fn unflatten(vec: &Tensor, valid_len: usize, max_len: usize) -> Result<Tensor> {
    let n = vec.numel();
    if max_len == 0 || n % max_len != 0 {
        return Err(Error::invalid("unflatten", format!("length {n} not divisible by max_len {max_len}")));
    }
    if valid_len == 0 || valid_len > max_len {
        return Err(Error::invalid("unflatten", format!("valid_len {valid_len} outside 1..={max_len}")));
    }
    let d = n / max_len;
    Tensor::new(vec.data()[..valid_len * d].to_vec(), &[valid_len, d])
}

/// Flattened decoder input for emitting position `t`: rows after `t` are
/// zeroed, rows `0..=t` kept.
pub fn causal_input(dec_reps: &Tensor, t: usize, max_len: usize) -> Result<Tensor> {
    let (len, d) = (dec_reps.rows(), dec_reps.cols());
    check_fits(len, max_len)?;
    if t >= len {
        return Err(Error::invalid("causal_input", format!("position {t} out of range for {len} rows")));
    }
    Tensor::new(flatten_rows(&dec_reps.data(), d, t + 1, max_len), &[max_len * d])
}

/// Cross-attention student input: padded encoder rows followed by padded
/// decoder rows, `2 · max_len · d` in total.
pub fn cross_input(enc_reps: &Tensor, dec_reps: &Tensor, max_len: usize) -> Result<Tensor> {
    cross_input_at(enc_reps, enc_reps.rows(), dec_reps, dec_reps.rows(), max_len)
}

/// Like [`cross_input`] with explicit valid lengths on both halves; the
/// decoder half keeps rows `0..dec_valid`.
pub fn cross_input_at(
    enc_reps: &Tensor,
    enc_valid: usize,
    dec_reps: &Tensor,
    dec_valid: usize,
    max_len: usize,
) -> Result<Tensor> {
    if enc_reps.cols() != dec_reps.cols() {
        return Err(Error::shape("cross_input", enc_reps.shape(), dec_reps.shape()));
    }
    check_fits(enc_reps.rows(), max_len)?;
    check_fits(dec_reps.rows(), max_len)?;
    if enc_valid > enc_reps.rows() || dec_valid > dec_reps.rows() {
        return Err(Error::invalid("cross_input", "valid length exceeds rows"));
    }
    let d = enc_reps.cols();
    let mut v = flatten_rows(&enc_reps.data(), d, enc_valid, max_len);
    v.extend(flatten_rows(&dec_reps.data(), d, dec_valid, max_len));
    Tensor::new(v, &[2 * max_len * d])
}

/// Columns of head `head` out of `[len, d]` → `[len, d / n_heads]`.
pub fn head_columns(reps: &Tensor, head: usize, n_heads: usize) -> Result<Tensor> {
    let d = reps.cols();
    if n_heads == 0 || d % n_heads != 0 || head >= n_heads {
        return Err(Error::invalid("head_columns", format!("head {head} of {n_heads} for width {d}")));
    }
    if n_heads == 1 {
        return Ok(reps.detach());
    }
    let dh = d / n_heads;
    Ok(reps.slice(1, head * dh, (head + 1) * dh)?.detach())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mat(rows: usize, d: usize, f: impl Fn(usize) -> f32) -> Tensor {
        Tensor::new((0..rows * d).map(f).collect(), &[rows, d]).unwrap()
    }

    #[test]
    fn full_valid_is_pure_flatten() {
        let x = mat(4, 3, |i| i as f32 + 1.0);
        assert_eq!(flatten_pad_mask(&x, 4, 4).unwrap().to_vec(), x.to_vec());
    }

    #[test]
    fn zero_valid_is_all_zero() {
        let x = mat(3, 2, |i| i as f32 + 1.0);
        let v = flatten_pad_mask(&x, 0, 5).unwrap();
        assert_eq!(v.numel(), 10);
        assert!(v.to_vec().iter().all(|&z| z == 0.0));
    }

    #[test]
    fn padded_rows_are_zero() {
        let x = mat(4, 2, |i| i as f32 + 1.0);
        let v = flatten_pad_mask(&x, 2, 6).unwrap().to_vec();
        assert_eq!(&v[..4], &[1.0, 2.0, 3.0, 4.0]);
        assert!(v[4..].iter().all(|&z| z == 0.0));
    }

    #[test]
    fn too_long_is_rejected() {
        let x = mat(7, 2, |_| 1.0);
        assert!(matches!(flatten_pad_mask(&x, 7, 6), Err(Error::SequenceTooLong { .. })));
        assert!(unflatten(&Tensor::zeros(&[13]), 1, 6).is_err());
    }

    #[test]
    fn unflatten_basics() {
        let z = unflatten(&Tensor::zeros(&[12]), 3, 4).unwrap();
        assert_eq!(z.shape(), &[3, 3]);
        assert!(z.to_vec().iter().all(|&v| v == 0.0));
        let v = Tensor::new((0..12).map(|i| i as f32).collect(), &[12]).unwrap();
        assert_eq!(unflatten(&v, 1, 4).unwrap().to_vec(), vec![0.0, 1.0, 2.0]);
    }

    #[test]
    fn causal_input_edges() {
        let x = mat(5, 2, |i| i as f32 + 1.0);
        assert_eq!(causal_input(&x, 4, 8).unwrap().to_vec(), flatten_pad_mask(&x, 5, 8).unwrap().to_vec());
        let first = causal_input(&x, 0, 8).unwrap().to_vec();
        assert_eq!(&first[..2], &[1.0, 2.0]);
        assert!(first[2..].iter().all(|&v| v == 0.0));
        assert!(causal_input(&x, 5, 8).is_err());
    }

    #[test]
    fn cross_input_layout() {
        let enc = mat(3, 2, |i| i as f32 + 1.0);
        let dec = Tensor::zeros(&[2, 2]);
        let v = cross_input(&enc, &dec, 4).unwrap();
        assert_eq!(v.numel(), 2 * 4 * 2);
        assert!(v.to_vec()[8..].iter().all(|&z| z == 0.0));
    }

    #[test]
    fn head_columns_slices() {
        let x = mat(2, 4, |i| i as f32);
        assert_eq!(head_columns(&x, 1, 2).unwrap().to_vec(), vec![2.0, 3.0, 6.0, 7.0]);
    }

    proptest! {
        #[test]
        fn unflatten_then_flatten_restores_prefix(
            values in proptest::collection::vec(-10.0f32..10.0, 24),
            valid in 1usize..=6,
        ) {
            // max_len 6, d 4
            let v = Tensor::new(values.clone(), &[24]).unwrap();
            let rows = unflatten(&v, valid, 6).unwrap();
            let back = flatten_pad_mask(&rows, valid, 6).unwrap().to_vec();
            prop_assert_eq!(&back[..valid * 4], &values[..valid * 4]);
            prop_assert!(back[valid * 4..].iter().all(|&z| z == 0.0));
        }

        #[test]
        fn flatten_round_trips_real_rows(
            values in proptest::collection::vec(-10.0f32..10.0, 1..8usize).prop_flat_map(|r| {
                proptest::collection::vec(-10.0f32..10.0, r.len() * 3)
            }),
        ) {
            let rows = values.len() / 3;
            let x = Tensor::new(values.clone(), &[rows, 3]).unwrap();
            let flat = flatten_pad_mask(&x, rows, 8).unwrap();
            prop_assert_eq!(unflatten(&flat, rows, 8).unwrap().to_vec(), values);
        }

        #[test]
        fn swapping_cross_halves_changes_input(
            a in proptest::collection::vec(-1.0f32..1.0, 6),
            b in proptest::collection::vec(-1.0f32..1.0, 6),
        ) {
            prop_assume!(a != b);
            let enc = Tensor::new(a, &[3, 2]).unwrap();
            let dec = Tensor::new(b, &[3, 2]).unwrap();
            prop_assert_ne!(
                cross_input(&enc, &dec, 4).unwrap().to_vec(),
                cross_input(&dec, &enc, 4).unwrap().to_vec()
            );
        }
    }
}
