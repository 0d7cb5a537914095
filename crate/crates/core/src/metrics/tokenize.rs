use std::fmt;
use std::str::FromStr;
use std::sync::OnceLock;

use regex::Regex;
use unicode_normalization::UnicodeNormalization;

use crate::error::MetricsError;

/// Token granularity used when scoring captions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tokenizer {
    /// Raw whitespace split.
    Space,
    /// One token per non-whitespace character of the NFC text.
    Character,
    /// Whitespace split of the NFC text with punctuation trimmed from token
    /// edges; tokens that were all punctuation are dropped.
    Syllable,
}

fn edge_punctuation() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"^\p{P}+|\p{P}+$").expect("valid pattern"))
}

impl Tokenizer {
    pub const ALL: [Tokenizer; 3] = [Tokenizer::Space, Tokenizer::Character, Tokenizer::Syllable];

    pub fn name(self) -> &'static str {
        match self {
            Tokenizer::Space => "space",
            Tokenizer::Character => "character",
            Tokenizer::Syllable => "syllable",
        }
    }

    pub fn tokenize(self, text: &str) -> Vec<String> {
        match self {
            Tokenizer::Space => text.split_whitespace().map(str::to_string).collect(),
            Tokenizer::Character => text.nfc().filter(|c| !c.is_whitespace()).map(String::from).collect(),
            Tokenizer::Syllable => {
                let composed: String = text.nfc().collect();
                composed
                    .split_whitespace()
                    .map(|w| edge_punctuation().replace_all(w, "").into_owned())
                    .filter(|w| !w.is_empty())
                    .collect()
            }
        }
    }
}

impl fmt::Display for Tokenizer {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tokenizer {
    type Err = MetricsError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Tokenizer::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| MetricsError::InvalidArgument(format!("unknown tokenizer {s:?}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn granularities() {
        let text = "Quán \u{0111}\u{00F4}\u{0301}ng, \"Phở\" ngon!";
        let raw = Tokenizer::Space.tokenize(text);
        assert_eq!(raw.len(), 4);
        assert_eq!(raw[1], "\u{0111}\u{00F4}\u{0301}ng,");
        assert_eq!(Tokenizer::Syllable.tokenize(text), ["Quán", "đống", "Phở", "ngon"]);
        assert_eq!(Tokenizer::Character.tokenize("đống à").len(), 5);
    }

    #[test]
    fn punctuation_only_tokens_vanish() {
        assert_eq!(Tokenizer::Syllable.tokenize("a - b ... c"), ["a", "b", "c"]);
        assert_eq!(Tokenizer::Syllable.tokenize("25.000đ"), ["25.000đ"]);
    }

    #[test]
    fn parse_names() {
        for t in Tokenizer::ALL {
            assert_eq!(t.name().parse::<Tokenizer>().unwrap(), t);
        }
        assert!("pyvi".parse::<Tokenizer>().is_err());
    }
}
