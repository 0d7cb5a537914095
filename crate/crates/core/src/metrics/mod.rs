//! Caption metrics (BLEU, CIDEr, ROUGE-L) with interchangeable tokenizers, and
//! a harness that scores one set of predictions under several tokenizers.

mod bleu;
mod cider;
mod rouge;
mod tokenize;

use std::collections::HashMap;

use crate::dataset::{Cell, Table};
use crate::error::MetricsError;

pub use bleu::{bleu_tokens, BleuStats, MAX_BLEU_ORDER};
pub use cider::{cider_per_image, cider_tokens, CiderScale, CIDER_ORDER};
pub use rouge::{lcs_len, rouge_l_pair, rouge_l_tokens, DEFAULT_BETA};
pub use tokenize::Tokenizer;

/// Counts of each n-gram in `tokens`.
pub fn ngrams(tokens: &[String], n: usize) -> HashMap<&[String], u64> {
    let mut out = HashMap::new();
    if n == 0 {
        return out;
    }
    for w in tokens.windows(n) {
        *out.entry(w).or_insert(0) += 1;
    }
    out
}

/// Candidates and their reference sets, already tokenized.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenizedCorpus {
    pub candidates: Vec<Vec<String>>,
    pub references: Vec<Vec<Vec<String>>>,
}

impl TokenizedCorpus {
    pub fn new<C: AsRef<str>, R: AsRef<str>>(
        candidates: &[C],
        references: &[Vec<R>],
        tokenizer: Tokenizer,
    ) -> Result<Self, MetricsError> {
        let candidates = candidates.iter().map(|c| tokenizer.tokenize(c.as_ref())).collect();
        let references = references
            .iter()
            .map(|refs| refs.iter().map(|r| tokenizer.tokenize(r.as_ref())).collect())
            .collect();
        TokenizedCorpus::from_tokens(candidates, references)
    }

    pub fn from_tokens(candidates: Vec<Vec<String>>, references: Vec<Vec<Vec<String>>>) -> Result<Self, MetricsError> {
        if candidates.is_empty() {
            return Err(MetricsError::EmptyCorpus);
        }
        if candidates.len() != references.len() {
            return Err(MetricsError::InvalidArgument(format!(
                "{} candidates but {} reference sets",
                candidates.len(),
                references.len()
            )));
        }
        if let Some(index) = references.iter().position(Vec::is_empty) {
            return Err(MetricsError::MissingReferences { index });
        }
        Ok(TokenizedCorpus { candidates, references })
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (&Vec<String>, &Vec<Vec<String>>)> {
        self.candidates.iter().zip(&self.references)
    }
}

/// Corpus BLEU-`n` (1 to 4).
pub fn bleu<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[Vec<R>],
    n: usize,
    tokenizer: Tokenizer,
) -> Result<f64, MetricsError> {
    bleu_tokens(&TokenizedCorpus::new(candidates, references, tokenizer)?, n)
}

pub fn cider<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[Vec<R>],
    tokenizer: Tokenizer,
    scale: CiderScale,
) -> Result<f64, MetricsError> {
    cider_tokens(&TokenizedCorpus::new(candidates, references, tokenizer)?, scale)
}

pub fn rouge_l<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[Vec<R>],
    tokenizer: Tokenizer,
    beta: f64,
) -> Result<f64, MetricsError> {
    rouge_l_tokens(&TokenizedCorpus::new(candidates, references, tokenizer)?, beta)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoreOptions {
    pub beta: f64,
    pub cider_scale: CiderScale,
}

impl Default for ScoreOptions {
    fn default() -> Self {
        ScoreOptions {
            beta: DEFAULT_BETA,
            cider_scale: CiderScale::X10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreReport {
    pub tokenizer: Tokenizer,
    pub corpus_size: usize,
    pub bleu1: f64,
    pub bleu4: f64,
    pub rouge_l: f64,
    pub cider: f64,
    pub cider_scale: CiderScale,
}

impl ScoreReport {
    pub const METRICS: [&'static str; 4] = ["BLEU-1", "BLEU-4", "ROUGE-L", "CIDEr"];

    pub fn values(&self) -> [f64; 4] {
        [self.bleu1, self.bleu4, self.rouge_l, self.cider]
    }

    pub fn table(reports: &[ScoreReport]) -> Table {
        let mut t = Table::new("scores", &["tokenizer", "images", "BLEU-1", "BLEU-4", "ROUGE-L", "CIDEr", "cider_scale"]);
        for r in reports {
            let mut row = vec![Cell::text(r.tokenizer.name()), r.corpus_size.into()];
            row.extend(r.values().map(Cell::Real));
            row.push(Cell::text(r.cider_scale.to_string()));
            t.push(row);
        }
        t
    }
}

pub fn score_corpus<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[Vec<R>],
    tokenizer: Tokenizer,
    options: ScoreOptions,
) -> Result<ScoreReport, MetricsError> {
    let corpus = TokenizedCorpus::new(candidates, references, tokenizer)?;
    let stats = BleuStats::collect(&corpus);
    Ok(ScoreReport {
        tokenizer,
        corpus_size: corpus.len(),
        bleu1: stats.score(1),
        bleu4: stats.score(4),
        rouge_l: rouge_l_tokens(&corpus, options.beta)?,
        cider: cider_tokens(&corpus, options.cider_scale)?,
        cider_scale: options.cider_scale,
    })
}

/// Scores under each tokenizer with the maximum absolute difference per metric.
#[derive(Debug, Clone, PartialEq)]
pub struct SensitivityReport {
    pub reports: Vec<ScoreReport>,
    /// BLEU-1, BLEU-4, ROUGE-L, CIDEr.
    pub delta: [f64; 4],
}

impl SensitivityReport {
    pub fn report(&self, tokenizer: Tokenizer) -> Option<&ScoreReport> {
        self.reports.iter().find(|r| r.tokenizer == tokenizer)
    }

    pub fn delta_table(&self) -> Table {
        let mut t = Table::new("tokenizer_delta", &["metric", "delta", "relative"]);
        for (k, name) in ScoreReport::METRICS.iter().enumerate() {
            let max = self.reports.iter().map(|r| r.values()[k]).fold(0.0, f64::max);
            let relative = if max > 0.0 { self.delta[k] / max } else { 0.0 };
            t.push(vec![Cell::text(*name), self.delta[k].into(), relative.into()]);
        }
        t
    }
}

pub fn sensitivity_harness<C: AsRef<str>, R: AsRef<str>>(
    candidates: &[C],
    references: &[Vec<R>],
    tokenizers: &[Tokenizer],
    options: ScoreOptions,
) -> Result<SensitivityReport, MetricsError> {
    if tokenizers.len() < 2 {
        return Err(MetricsError::InvalidArgument("the harness needs at least two tokenizers".into()));
    }
    let reports = tokenizers
        .iter()
        .map(|&t| score_corpus(candidates, references, t, options))
        .collect::<Result<Vec<_>, _>>()?;
    let mut delta = [0.0; 4];
    for (k, d) in delta.iter_mut().enumerate() {
        let vals = reports.iter().map(|r| r.values()[k]);
        let max = vals.clone().fold(f64::NEG_INFINITY, f64::max);
        let min = vals.fold(f64::INFINITY, f64::min);
        *d = max - min;
    }
    Ok(SensitivityReport { reports, delta })
}
