use crate::error::MetricsError;

use super::TokenizedCorpus;

/// Recall weight of the F-measure.
pub const DEFAULT_BETA: f64 = 1.2;

/// Length of the longest common subsequence, two-row dynamic program.
pub fn lcs_len<T: PartialEq>(a: &[T], b: &[T]) -> usize {
    let mut prev = vec![0usize; b.len() + 1];
    let mut cur = vec![0usize; b.len() + 1];
    for x in a {
        for (j, y) in b.iter().enumerate() {
            cur[j + 1] = if x == y { prev[j] + 1 } else { prev[j + 1].max(cur[j]) };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[b.len()]
}

/// LCS F-measure of one candidate against one reference.
pub fn rouge_l_pair<T: PartialEq>(candidate: &[T], reference: &[T], beta: f64) -> f64 {
    let lcs = lcs_len(candidate, reference);
    if lcs == 0 {
        return 0.0;
    }
    let recall = lcs as f64 / reference.len() as f64;
    let precision = lcs as f64 / candidate.len() as f64;
    let b2 = beta * beta;
    (1.0 + b2) * recall * precision / (recall + b2 * precision)
}

/// Best F-measure over each image's references, averaged over images.
pub fn rouge_l_tokens(corpus: &TokenizedCorpus, beta: f64) -> Result<f64, MetricsError> {
    if !(beta.is_finite() && beta > 0.0) {
        return Err(MetricsError::InvalidArgument(format!("beta must be positive, got {beta}")));
    }
    let total: f64 = corpus
        .pairs()
        .map(|(c, refs)| refs.iter().map(|r| rouge_l_pair(c, r, beta)).fold(0.0, f64::max))
        .sum();
    Ok(total / corpus.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lcs_examples() {
        assert_eq!(lcs_len(b"ABCBDAB", b"BDCABA"), 4);
        assert_eq!(lcs_len::<u8>(b"", b"abc"), 0);
        assert_eq!(lcs_len(b"abc", b"abc"), 3);
    }

    #[test]
    fn identical_and_disjoint() {
        let a = ["x", "y", "z"];
        assert!((rouge_l_pair(&a, &a, DEFAULT_BETA) - 1.0).abs() < 1e-15);
        assert_eq!(rouge_l_pair(&a, &["p", "q"], DEFAULT_BETA), 0.0);
    }

    #[test]
    fn f_measure_by_hand() {
        // lcs 2, R = 2/4, P = 2/3
        let f = rouge_l_pair(&["a", "b", "c"], &["a", "x", "b", "y"], 1.2);
        let (r, p) = (0.5, 2.0 / 3.0);
        assert!((f - 2.44 * r * p / (r + 1.44 * p)).abs() < 1e-15);
    }
}
