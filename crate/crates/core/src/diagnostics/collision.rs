use std::collections::BTreeMap;

use crate::dataset::{Cell, Table};
use crate::error::DiagnosticsError;
use crate::orthography::{fold, normalize, strip_diacritics};
use crate::syllable::{is_vietnamese_with, SyllableInventory};

use super::word_tokens;

/// Distinct Vietnamese words sharing one stripped base form.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CollisionGroup {
    pub base: String,
    /// Sorted, at least two.
    pub members: Vec<String>,
    pub total_frequency: u64,
    /// `members.len() × total_frequency`.
    pub danger_score: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CollisionReport {
    pub rate: f64,
    pub vietnamese_words: usize,
    pub colliding_words: usize,
    /// Most dangerous first; ties broken by base form.
    pub groups: Vec<CollisionGroup>,
}

impl CollisionReport {
    pub fn summary_table(&self) -> Table {
        let mut t = Table::new("collision_summary", &["vietnamese_words", "colliding_words", "groups", "rate"]);
        t.push(vec![
            self.vietnamese_words.into(),
            self.colliding_words.into(),
            self.groups.len().into(),
            self.rate.into(),
        ]);
        t
    }

    pub fn groups_table(&self) -> Table {
        let mut t = Table::new("collision_groups", &["base", "size", "total_frequency", "danger_score", "members"]);
        for g in &self.groups {
            t.push(vec![
                Cell::text(&g.base),
                g.members.len().into(),
                Cell::Int(g.total_frequency as i64),
                Cell::Int(g.danger_score as i64),
                Cell::text(g.members.join(" ")),
            ]);
        }
        t
    }
}

/// Word frequencies over whitespace-tokenized texts.
pub fn vocabulary<'a>(texts: impl IntoIterator<Item = &'a str>) -> BTreeMap<String, u64> {
    let mut vocab = BTreeMap::new();
    for text in texts {
        for w in word_tokens(text) {
            *vocab.entry(w).or_insert(0) += 1;
        }
    }
    vocab
}

pub fn collision_rate<W: AsRef<str>>(vocab: impl IntoIterator<Item = (W, u64)>) -> Result<CollisionReport, DiagnosticsError> {
    collision_rate_with(SyllableInventory::bundled(), vocab)
}

/// Fraction of Vietnamese words whose base form is shared with another word.
/// Words are case-folded first; non-Vietnamese words are ignored.
pub fn collision_rate_with<W: AsRef<str>>(
    inventory: &SyllableInventory,
    vocab: impl IntoIterator<Item = (W, u64)>,
) -> Result<CollisionReport, DiagnosticsError> {
    let mut words: BTreeMap<String, u64> = BTreeMap::new();
    for (w, f) in vocab {
        let w = fold(w.as_ref());
        if is_vietnamese_with(inventory, &w) {
            *words.entry(w).or_insert(0) += f;
        }
    }
    if words.is_empty() {
        return Err(DiagnosticsError::EmptyVocabulary);
    }
    let mut by_base: BTreeMap<String, Vec<(&String, u64)>> = BTreeMap::new();
    for (w, &f) in &words {
        by_base.entry(strip_diacritics(&normalize(w))).or_default().push((w, f));
    }
    let mut groups: Vec<CollisionGroup> = by_base
        .into_iter()
        .filter(|(_, m)| m.len() >= 2)
        .map(|(base, m)| {
            let total_frequency = m.iter().map(|(_, f)| f).sum::<u64>();
            CollisionGroup {
                base,
                danger_score: m.len() as u64 * total_frequency,
                members: m.into_iter().map(|(w, _)| w.clone()).collect(),
                total_frequency,
            }
        })
        .collect();
    groups.sort_by(|a, b| b.danger_score.cmp(&a.danger_score).then_with(|| a.base.cmp(&b.base)));
    let colliding_words = groups.iter().map(|g| g.members.len()).sum();
    Ok(CollisionReport {
        rate: colliding_words as f64 / words.len() as f64,
        vietnamese_words: words.len(),
        colliding_words,
        groups,
    })
}
