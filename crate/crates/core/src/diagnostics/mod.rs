//! Corpus-level analyses of captions and their OCR tokens: diacritic
//! collisions, caption/OCR divergence, OCR error types and how captions use
//! scene text.

mod collision;
mod divergence;
mod taxonomy;
mod usage;

use std::collections::BTreeSet;
use std::path::Path;

use crate::error::DatasetError;
use crate::orthography::fold;

pub use collision::{collision_rate, collision_rate_with, vocabulary, CollisionGroup, CollisionReport};
pub use divergence::{divergence_analysis, DivergenceRecord, DivergenceTable, Stratum, StratumCounts};
pub use taxonomy::{classify_error, confusion_matrices, ConfusionMatrices, ErrorLabel, ErrorType, VOWEL_VARIANTS};
pub use usage::{
    copy_classification, coverage_rate, usage_taxonomy, CopyLabel, MatchKind, TextMatcher, UsageCategory, UsageLabel,
};

/// Tokens shorter than this (in characters) never count as valid OCR tokens.
pub const MIN_TOKEN_CHARS: usize = 2;

const BUNDLED_STOPWORDS: &str = include_str!("../../data/stopwords.txt");

/// Splits on whitespace, trims punctuation from both ends and folds case.
/// Pieces without a letter or digit are dropped.
pub fn word_tokens(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| w.trim_matches(|c: char| !c.is_alphanumeric()))
        .filter(|w| !w.is_empty())
        .map(fold)
        .collect()
}

/// Whether a token is a candidate for diacritic comparison.
pub fn has_letters(token: &str) -> bool {
    token.chars().any(char::is_alphabetic)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stopwords {
    words: BTreeSet<String>,
}

impl Stopwords {
    pub fn parse(text: &str) -> Self {
        let words = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(fold)
            .collect();
        Stopwords { words }
    }

    pub fn bundled() -> Self {
        Stopwords::parse(BUNDLED_STOPWORDS)
    }

    pub fn empty() -> Self {
        Stopwords { words: BTreeSet::new() }
    }

    pub fn load(path: &Path) -> Result<Self, DatasetError> {
        let text = std::fs::read_to_string(path).map_err(|source| DatasetError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(Stopwords::parse(&text))
    }

    pub fn contains(&self, word: &str) -> bool {
        self.words.contains(&fold(word))
    }

    pub fn len(&self) -> usize {
        self.words.len()
    }

    pub fn is_empty(&self) -> bool {
        self.words.is_empty()
    }
}

impl Default for Stopwords {
    fn default() -> Self {
        Stopwords::bundled()
    }
}
