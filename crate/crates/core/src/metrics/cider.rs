use std::collections::HashMap;
use std::fmt;
use std::str::FromStr;

use crate::error::MetricsError;

use super::{ngrams, TokenizedCorpus};

pub const CIDER_ORDER: usize = 4;

/// Presentation scale: `X10` multiplies the raw mean cosine by ten, the
/// common convention; `X1` leaves it in [0, 1].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CiderScale {
    X1,
    #[default]
    X10,
}

impl CiderScale {
    pub fn factor(self) -> f64 {
        match self {
            CiderScale::X1 => 1.0,
            CiderScale::X10 => 10.0,
        }
    }
}

impl fmt::Display for CiderScale {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CiderScale::X1 => "x1",
            CiderScale::X10 => "x10",
        })
    }
}

impl FromStr for CiderScale {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "x1" => Ok(CiderScale::X1),
            "x10" => Ok(CiderScale::X10),
            _ => Err(MetricsError::InvalidArgument(format!("unknown CIDEr scale {s:?}"))),
        }
    }
}

type Vector<'a> = HashMap<&'a [String], f64>;

/// Document frequencies: the number of images whose reference set contains
/// each n-gram.
fn document_frequencies(corpus: &TokenizedCorpus) -> HashMap<&[String], u64> {
    let mut df = HashMap::new();
    for refs in &corpus.references {
        let mut seen: HashMap<&[String], ()> = HashMap::new();
        for r in refs {
            for n in 1..=CIDER_ORDER {
                for g in ngrams(r, n).into_keys() {
                    seen.insert(g, ());
                }
            }
        }
        for g in seen.into_keys() {
            *df.entry(g).or_insert(0) += 1;
        }
    }
    df
}

/// TF-IDF vector of one order: term frequency times `ln(N / df)`, where
/// unseen n-grams take df = 1.
fn tfidf<'a>(tokens: &'a [String], n: usize, df: &HashMap<&[String], u64>, log_images: f64) -> Vector<'a> {
    let counts = ngrams(tokens, n);
    let total: u64 = counts.values().sum();
    counts
        .into_iter()
        .map(|(g, c)| {
            let d = df.get(g).copied().unwrap_or(0).max(1) as f64;
            (g, c as f64 / total as f64 * (log_images - d.ln()))
        })
        .collect()
}

fn cosine(a: &Vector, b: &Vector) -> f64 {
    let norm = |v: &Vector| v.values().map(|x| x * x).sum::<f64>().sqrt();
    let (na, nb) = (norm(a), norm(b));
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    let dot: f64 = a.iter().filter_map(|(g, x)| b.get(g).map(|y| x * y)).sum();
    dot / (na * nb)
}

/// Per-image scores before scaling: mean over references of the order-averaged
/// TF-IDF cosine similarity.
pub fn cider_per_image(corpus: &TokenizedCorpus) -> Vec<f64> {
    let df = document_frequencies(corpus);
    let log_images = (corpus.len() as f64).ln();
    corpus
        .pairs()
        .map(|(cand, refs)| {
            let mut total = 0.0;
            for n in 1..=CIDER_ORDER {
                let c = tfidf(cand, n, &df, log_images);
                for r in refs {
                    total += cosine(&c, &tfidf(r, n, &df, log_images)) / CIDER_ORDER as f64;
                }
            }
            total / refs.len() as f64
        })
        .collect()
}

/// Corpus CIDEr. With a single image every n-gram has zero IDF and the score
/// is zero.
pub fn cider_tokens(corpus: &TokenizedCorpus, scale: CiderScale) -> Result<f64, MetricsError> {
    let per_image = cider_per_image(corpus);
    Ok(per_image.iter().sum::<f64>() / per_image.len() as f64 * scale.factor())
}
