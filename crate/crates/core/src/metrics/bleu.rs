use std::collections::HashMap;

use crate::error::MetricsError;

use super::{ngrams, TokenizedCorpus};

pub const MAX_BLEU_ORDER: usize = 4;

/// Clipped n-gram matches and candidate n-gram totals for orders 1..=4,
/// plus candidate and closest-reference lengths, summed over the corpus.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: [u64; MAX_BLEU_ORDER],
    pub totals: [u64; MAX_BLEU_ORDER],
    pub candidate_length: u64,
    pub reference_length: u64,
}

impl BleuStats {
    pub fn collect(corpus: &TokenizedCorpus) -> Self {
        let mut s = BleuStats::default();
        for (cand, refs) in corpus.pairs() {
            s.candidate_length += cand.len() as u64;
            // closest reference length, shorter on ties
            let closest = refs
                .iter()
                .map(|r| r.len())
                .min_by_key(|&l| (l.abs_diff(cand.len()), l))
                .unwrap_or(0);
            s.reference_length += closest as u64;
            for n in 1..=MAX_BLEU_ORDER {
                let counts = ngrams(cand, n);
                let mut max_ref: HashMap<&[String], u64> = HashMap::new();
                for r in refs {
                    for (g, c) in ngrams(r, n) {
                        let e = max_ref.entry(g).or_insert(0);
                        *e = (*e).max(c);
                    }
                }
                for (g, c) in counts {
                    s.totals[n - 1] += c;
                    s.matches[n - 1] += c.min(max_ref.get(g).copied().unwrap_or(0));
                }
            }
        }
        s
    }

    pub fn precision(&self, n: usize) -> f64 {
        if self.totals[n - 1] == 0 {
            0.0
        } else {
            self.matches[n - 1] as f64 / self.totals[n - 1] as f64
        }
    }

    /// `min(1, e^{1 - r/c})`; zero for an empty candidate side.
    pub fn brevity_penalty(&self) -> f64 {
        if self.candidate_length == 0 {
            return 0.0;
        }
        let ratio = self.reference_length as f64 / self.candidate_length as f64;
        (1.0 - ratio).exp().min(1.0)
    }

    /// Unsmoothed: any zero precision makes the score zero.
    pub fn score(&self, n: usize) -> f64 {
        let mut log_sum = 0.0;
        for k in 1..=n {
            let p = self.precision(k);
            if p == 0.0 {
                return 0.0;
            }
            log_sum += p.ln();
        }
        self.brevity_penalty() * (log_sum / n as f64).exp()
    }
}

pub fn bleu_tokens(corpus: &TokenizedCorpus, n: usize) -> Result<f64, MetricsError> {
    if !(1..=MAX_BLEU_ORDER).contains(&n) {
        return Err(MetricsError::InvalidArgument(format!("BLEU order {n} outside 1..={MAX_BLEU_ORDER}")));
    }
    Ok(BleuStats::collect(corpus).score(n))
}
