//! Rule-based decomposition of Vietnamese syllables into onset, medial,
//! nucleus and coda, validated against a data-driven set of phonotactic rules.

mod inventory;

use std::collections::BTreeSet;
use std::fmt;

use unicode_normalization::UnicodeNormalization;

pub use inventory::{
    Pattern, Rule, SyllableInventory, CODA_COUNT, MEDIAL_COUNT, NUCLEUS_COUNT, ONSET_COUNT,
};

use crate::error::SyllableError;
use crate::orthography::{self, normalize, NormalizedText, Tone};

/// Segmental part of a syllable. Components are lowercase NFC strings; an
/// empty string is an empty slot.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct SyllableParts {
    pub onset: String,
    pub medial: String,
    pub nucleus: String,
    pub coda: String,
}

impl SyllableParts {
    pub fn new(onset: &str, medial: &str, nucleus: &str, coda: &str) -> Self {
        SyllableParts {
            onset: onset.to_string(),
            medial: medial.to_string(),
            nucleus: nucleus.to_string(),
            coda: coda.to_string(),
        }
    }

    /// medial ⊕ nucleus ⊕ coda
    pub fn rhyme(&self) -> String {
        format!("{}{}{}", self.medial, self.nucleus, self.coda)
    }

    /// Concatenated spelling without tone.
    pub fn spelling(&self) -> String {
        format!("{}{}{}{}", self.onset, self.medial, self.nucleus, self.coda)
    }

    /// Index (in letters) of the vowel that carries the tone mark. The mark
    /// goes on the nucleus; in two-letter nuclei it sits on the second letter
    /// except for the open diphthongs ia, ya, ua, ưa.
    pub fn tone_letter(&self) -> usize {
        let before = self.onset.chars().count() + self.medial.chars().count();
        let offset = match self.nucleus.chars().count() {
            0 | 1 => 0,
            _ if matches!(self.nucleus.as_str(), "ia" | "ya" | "ua" | "ưa") => 0,
            n => n - 1,
        };
        before + offset
    }
}

impl fmt::Display for SyllableParts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let slot = |s: &str| if s.is_empty() { "∅".to_string() } else { s.to_string() };
        write!(
            f,
            "{}|{}|{}|{}",
            slot(&self.onset),
            slot(&self.medial),
            slot(&self.nucleus),
            slot(&self.coda)
        )
    }
}

/// A full syllable: segments plus tone.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Syllable {
    pub parts: SyllableParts,
    pub tone: Tone,
}

impl Syllable {
    pub fn new(parts: SyllableParts, tone: Tone) -> Self {
        Syllable { parts, tone }
    }

    /// Normalized spelling with the tone mark on the nucleus.
    pub fn render(&self) -> NormalizedText {
        let toneless = normalize(&self.parts.spelling());
        orthography::place_tone(&toneless, self.parts.tone_letter(), self.tone)
            .expect("tone letter lies inside the spelling")
    }
}

/// Parses a toneless, lowercase syllable with the bundled inventory.
pub fn decompose(toneless: &str) -> Result<SyllableParts, SyllableError> {
    decompose_with(SyllableInventory::bundled(), toneless)
}

/// Longest onset first; among the structural parses the first that satisfies
/// every non-tonal rule wins. This is what settles gi + a against g + ia.
pub fn decompose_with(
    inventory: &SyllableInventory,
    toneless: &str,
) -> Result<SyllableParts, SyllableError> {
    let text: String = toneless.nfc().collect();
    structural_parses(inventory, &text)
        .into_iter()
        .find(|p| inventory.violations(p, None).is_empty())
        .ok_or(SyllableError::NotASyllable(toneless.to_string()))
}

/// Every split of `text` into inventory components, in preference order.
pub fn structural_parses(inventory: &SyllableInventory, text: &str) -> Vec<SyllableParts> {
    let mut out = Vec::new();
    for onset in inventory.onsets_longest_first() {
        let Some(after_onset) = text.strip_prefix(onset.as_str()) else {
            continue;
        };
        for medial in std::iter::once("").chain(inventory.medials.iter().map(String::as_str)) {
            let Some(after_medial) = after_onset.strip_prefix(medial) else {
                continue;
            };
            for nucleus in inventory.nuclei_longest_first() {
                let Some(coda) = after_medial.strip_prefix(nucleus.as_str()) else {
                    continue;
                };
                if inventory.is_coda(coda) {
                    out.push(SyllableParts::new(onset, medial, nucleus, coda));
                }
            }
        }
    }
    out
}

/// Names of violated rules, empty when the syllable is valid.
pub fn validate(syllable: &Syllable) -> Vec<String> {
    validate_with(SyllableInventory::bundled(), syllable)
}

pub fn validate_with(inventory: &SyllableInventory, syllable: &Syllable) -> Vec<String> {
    let mut out = Vec::new();
    if !inventory.in_inventory(&syllable.parts) {
        out.push("inventory-membership".to_string());
    }
    out.extend(inventory.violations(&syllable.parts, Some(syllable.tone)));
    out
}

/// Full analysis of one token.
pub fn analyze(token: &str) -> Result<Syllable, SyllableError> {
    analyze_with(SyllableInventory::bundled(), token)
}

pub fn analyze_with(inventory: &SyllableInventory, token: &str) -> Result<Syllable, SyllableError> {
    let normalized = normalize(token);
    if !normalized.as_str().chars().all(is_vietnamese_char) {
        return Err(SyllableError::NotASyllable(token.to_string()));
    }
    let (tone, toneless) = orthography::extract_tone(&normalized)?;
    let parts = decompose_with(inventory, &toneless.composed())?;
    let syllable = Syllable::new(parts, tone);
    if validate_with(inventory, &syllable).is_empty() {
        Ok(syllable)
    } else {
        Err(SyllableError::NotASyllable(token.to_string()))
    }
}

// digits, punctuation and letters outside the Vietnamese alphabet fail here
fn is_vietnamese_char(c: char) -> bool {
    matches!(c, 'a'..='z' | 'đ') && !matches!(c, 'f' | 'j' | 'w' | 'z')
        || orthography::is_tone_mark(c)
        || orthography::is_quality_mark(c)
}

pub fn is_vietnamese(token: &str) -> bool {
    analyze(token).is_ok()
}

pub fn is_vietnamese_with(inventory: &SyllableInventory, token: &str) -> bool {
    analyze_with(inventory, token).is_ok()
}

/// Brute-force enumeration of onset × medial × nucleus × coda filtered by the
/// non-tonal rules.
pub fn enumerate_valid_syllables(inventory: &SyllableInventory) -> BTreeSet<String> {
    enumerate_valid_parts(inventory)
        .into_iter()
        .map(|p| p.spelling())
        .collect()
}

pub fn enumerate_valid_parts(inventory: &SyllableInventory) -> Vec<SyllableParts> {
    let with_empty = |v: &[String]| -> Vec<String> {
        std::iter::once(String::new()).chain(v.iter().cloned()).collect()
    };
    let onsets = with_empty(&inventory.onsets);
    let medials = with_empty(&inventory.medials);
    let codas = with_empty(&inventory.codas);
    let mut out = Vec::new();
    for onset in &onsets {
        for medial in &medials {
            for nucleus in &inventory.nuclei {
                for coda in &codas {
                    let parts = SyllableParts::new(onset, medial, nucleus, coda);
                    if inventory.violations(&parts, None).is_empty() {
                        out.push(parts);
                    }
                }
            }
        }
    }
    out
}

/// Tones the tonal rules allow on `parts`.
pub fn permitted_tones(inventory: &SyllableInventory, parts: &SyllableParts) -> Vec<Tone> {
    Tone::ALL
        .into_iter()
        .filter(|&t| inventory.violations(parts, Some(t)).is_empty())
        .collect()
}
