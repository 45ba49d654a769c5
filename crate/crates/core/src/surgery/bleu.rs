use std::collections::HashMap;
use std::hash::Hash;

use crate::error::{Error, Result};

/// One-line statement of the scoring rule, written into report headers.
pub const BLEU_FORMULA: &str = "corpus BLEU-4: BP * exp(mean_n ln p_n), p_n = clipped matches / hypothesis n-grams \
summed over the corpus; for n >= 2 a zero match count is smoothed to (0 + 1) / (count + 1); \
p_1 = 0 gives 0; BP = min(1, exp(1 - ref_len / hyp_len))";

fn ngram_counts<T: Eq + Hash>(tokens: &[T], n: usize) -> HashMap<&[T], usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w).or_insert(0) += 1;
        }
    }
    counts
}

/// Corpus-level BLEU in `[0, 1]` with a single reference per hypothesis.
///
/// Clipped n-gram matches and hypothesis n-gram totals are summed over the
/// whole corpus before taking precisions. For `n ≥ 2` a precision with no
/// matches becomes `1 / (total + 1)` so short corpora do not collapse to
/// zero; the unigram precision is never smoothed.
pub fn bleu<T: Eq + Hash>(hypotheses: &[Vec<T>], references: &[Vec<T>], max_n: usize) -> Result<f64> {
    if hypotheses.is_empty() {
        return Err(Error::Bleu("no hypotheses to score".into()));
    }
    if hypotheses.len() != references.len() {
        return Err(Error::Bleu(format!(
            "{} hypotheses but {} references",
            hypotheses.len(),
            references.len()
        )));
    }
    if max_n == 0 {
        return Err(Error::Bleu("max_n must be at least 1".into()));
    }
    let mut matches = vec![0usize; max_n];
    let mut totals = vec![0usize; max_n];
    let (mut hyp_len, mut ref_len) = (0usize, 0usize);
    for (hyp, reference) in hypotheses.iter().zip(references) {
        hyp_len += hyp.len();
        ref_len += reference.len();
        for n in 1..=max_n {
            let ref_counts = ngram_counts(reference, n);
            for (gram, c) in ngram_counts(hyp, n) {
                matches[n - 1] += c.min(ref_counts.get(gram).copied().unwrap_or(0));
                totals[n - 1] += c;
            }
        }
    }
    if hyp_len == 0 || matches[0] == 0 {
        return Ok(0.0);
    }
    let mut log_sum = 0f64;
    for n in 0..max_n {
        let p = if n > 0 && matches[n] == 0 {
            1.0 / (totals[n] as f64 + 1.0)
        } else {
            matches[n] as f64 / totals[n] as f64
        };
        log_sum += p.ln();
    }
    let bp = if hyp_len >= ref_len {
        1.0
    } else {
        (1.0 - ref_len as f64 / hyp_len as f64).exp()
    };
    Ok((bp * (log_sum / max_n as f64).exp()).clamp(0.0, 1.0))
}
