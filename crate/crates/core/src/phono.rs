//! Pairwise phonological features between OCR tokens.
//!
//! Each token is analysed once (Vietnamese or not, tone, tone-stripped base,
//! onset/medial/nucleus/coda). A pair of Vietnamese tokens then gets eight
//! equality flags; any pair with a non-Vietnamese member is all zero.

use std::collections::HashMap;
use std::fmt;

use crate::orthography::{Tone, ToneClass};
use crate::syllable::{self, SyllableInventory, SyllableParts};

pub const FEATURE_COUNT: usize = 8;

pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "onset_match",
    "nucleus_match",
    "coda_match",
    "rhyme_match",
    "tone_match",
    "tone_class_match",
    "base_form_match",
    "both_vietnamese",
];

/// Eight binary flags packed into one byte; bit k holds feature p_{k+1}.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct PhonoPairFeatures(u8);

impl PhonoPairFeatures {
    pub const ZERO: PhonoPairFeatures = PhonoPairFeatures(0);
    pub const ALL: PhonoPairFeatures = PhonoPairFeatures(0xFF);

    pub fn from_flags(flags: [bool; FEATURE_COUNT]) -> Self {
        let bits = flags
            .iter()
            .enumerate()
            .fold(0u8, |acc, (k, &f)| acc | ((f as u8) << k));
        PhonoPairFeatures(bits)
    }

    /// `index` is 1-based, matching p1..p8.
    pub fn get(self, index: usize) -> bool {
        assert!((1..=FEATURE_COUNT).contains(&index), "feature index {index}");
        self.0 >> (index - 1) & 1 == 1
    }

    pub fn flags(self) -> [bool; FEATURE_COUNT] {
        std::array::from_fn(|k| self.0 >> k & 1 == 1)
    }

    pub fn to_array(self) -> [u8; FEATURE_COUNT] {
        std::array::from_fn(|k| self.0 >> k & 1)
    }

    pub fn to_f64(self) -> [f64; FEATURE_COUNT] {
        std::array::from_fn(|k| f64::from(self.0 >> k & 1))
    }

    pub fn bits(self) -> u8 {
        self.0
    }
}

impl fmt::Display for PhonoPairFeatures {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let a = self.to_array();
        write!(f, "[{}]", a.map(|b| b.to_string()).join(","))
    }
}

/// Per-token result of the first stage.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TokenAnalysis {
    pub parts: SyllableParts,
    pub tone: Tone,
    pub tone_class: ToneClass,
    /// Tone-stripped spelling; keeps vowel-quality marks and đ.
    pub base: String,
}

impl TokenAnalysis {
    pub fn rhyme(&self) -> String {
        self.parts.rhyme()
    }
}

/// `None` for tokens that are not Vietnamese syllables.
pub fn analyze_token(inventory: &SyllableInventory, token: &str) -> Option<TokenAnalysis> {
    let syl = syllable::analyze_with(inventory, token).ok()?;
    Some(TokenAnalysis {
        base: syl.parts.spelling(),
        tone_class: syl.tone.class(),
        tone: syl.tone,
        parts: syl.parts,
    })
}

pub fn pair_from_analyses(a: Option<&TokenAnalysis>, b: Option<&TokenAnalysis>) -> PhonoPairFeatures {
    let (Some(a), Some(b)) = (a, b) else {
        return PhonoPairFeatures::ZERO;
    };
    PhonoPairFeatures::from_flags([
        a.parts.onset == b.parts.onset,
        a.parts.nucleus == b.parts.nucleus,
        a.parts.coda == b.parts.coda,
        a.rhyme() == b.rhyme(),
        a.tone == b.tone,
        a.tone_class == b.tone_class,
        a.base == b.base,
        true,
    ])
}

pub fn extract_pair(a: &str, b: &str) -> PhonoPairFeatures {
    extract_pair_with(SyllableInventory::bundled(), a, b)
}

pub fn extract_pair_with(inventory: &SyllableInventory, a: &str, b: &str) -> PhonoPairFeatures {
    let ta = analyze_token(inventory, a);
    let tb = analyze_token(inventory, b);
    pair_from_analyses(ta.as_ref(), tb.as_ref())
}

/// N×N tensor of pair features, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhonoTensor {
    token_count: usize,
    entries: Vec<PhonoPairFeatures>,
}

impl PhonoTensor {
    pub fn token_count(&self) -> usize {
        self.token_count
    }

    pub fn get(&self, i: usize, j: usize) -> PhonoPairFeatures {
        self.entries[i * self.token_count + j]
    }

    pub fn entries(&self) -> &[PhonoPairFeatures] {
        &self.entries
    }

    /// Features as reals, shape (N·N) × 8.
    pub fn to_f64_rows(&self) -> Vec<[f64; FEATURE_COUNT]> {
        self.entries.iter().map(|e| e.to_f64()).collect()
    }

    pub fn zeros(token_count: usize) -> Self {
        PhonoTensor {
            token_count,
            entries: vec![PhonoPairFeatures::ZERO; token_count * token_count],
        }
    }
}

pub fn build_tensor<S: AsRef<str>>(tokens: &[S]) -> PhonoTensor {
    build_tensor_with(SyllableInventory::bundled(), tokens)
}

/// Analyses each distinct token string once, then fills the upper triangle and
/// mirrors it.
pub fn build_tensor_with<S: AsRef<str>>(inventory: &SyllableInventory, tokens: &[S]) -> PhonoTensor {
    let mut cache: HashMap<&str, Option<TokenAnalysis>> = HashMap::new();
    for t in tokens {
        let t = t.as_ref();
        cache.entry(t).or_insert_with(|| analyze_token(inventory, t));
    }
    let analyses: Vec<Option<&TokenAnalysis>> =
        tokens.iter().map(|t| cache[t.as_ref()].as_ref()).collect();
    let n = tokens.len();
    let mut tensor = PhonoTensor::zeros(n);
    for i in 0..n {
        for j in i..n {
            let f = pair_from_analyses(analyses[i], analyses[j]);
            tensor.entries[i * n + j] = f;
            tensor.entries[j * n + i] = f;
        }
    }
    tensor
}

#[cfg(test)]
mod tests {
    use super::*;

    fn flags(v: [u8; 8]) -> PhonoPairFeatures {
        PhonoPairFeatures::from_flags(v.map(|b| b == 1))
    }

    #[test]
    fn truong_pair() {
        assert_eq!(extract_pair("Trường", "Trương"), flags([1, 1, 1, 1, 0, 1, 1, 1]));
    }

    #[test]
    fn ma_pair_crosses_tone_class() {
        assert_eq!(extract_pair("ma", "mạ"), flags([1, 1, 1, 1, 0, 0, 1, 1]));
    }

    #[test]
    fn non_vietnamese_gate() {
        assert_eq!(extract_pair("shop", "bán"), PhonoPairFeatures::ZERO);
    }

    #[test]
    fn p7_keeps_quality_marks_and_stroke() {
        // base form differs even though the fully stripped forms agree
        assert!(!extract_pair("đồng", "dòng").get(7));
        assert!(!extract_pair("cô", "có").get(7));
        assert!(extract_pair("có", "cỏ").get(7));
    }

    #[test]
    fn ma_family_tensor() {
        let t = build_tensor(&["ma", "mà", "má"]);
        assert_eq!(t.token_count(), 3);
        for i in 0..3 {
            for j in 0..3 {
                let f = t.get(i, j);
                if i == j {
                    assert_eq!(f, PhonoPairFeatures::ALL);
                } else {
                    assert!(f.get(7) && !f.get(5), "({i},{j}) {f}");
                }
            }
        }
    }

    #[test]
    fn single_and_foreign_tensors() {
        assert_eq!(build_tensor(&["bán"]).get(0, 0), PhonoPairFeatures::ALL);
        let t = build_tensor(&["123", "abc"]);
        assert!(t.entries().iter().all(|&e| e == PhonoPairFeatures::ZERO));
    }

    #[test]
    fn bit_packing_is_transparent() {
        for bits in 0..=255u8 {
            let f = PhonoPairFeatures(bits);
            assert_eq!(PhonoPairFeatures::from_flags(f.flags()), f);
            for k in 1..=8 {
                assert_eq!(f.get(k), f.to_array()[k - 1] == 1);
            }
        }
    }
}
