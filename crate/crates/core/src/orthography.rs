//! Character-level Vietnamese orthography.
//!
//! Text is analysed in a decomposed form: lowercase, canonical decomposition,
//! and within every run of combining marks the vowel-quality marks (circumflex,
//! breve, horn) are moved in front of the tone mark. Plain NFD orders the dot
//! below (nặng) before the circumflex, which would make "ậ" and "ấ" disagree on
//! where the tone lives; the reordering keeps the layout uniform.

use std::fmt;
use std::str::FromStr;

use unicode_normalization::UnicodeNormalization;

use crate::error::OrthographyError;

pub const GRAVE: char = '\u{0300}';
pub const ACUTE: char = '\u{0301}';
pub const TILDE: char = '\u{0303}';
pub const HOOK_ABOVE: char = '\u{0309}';
pub const DOT_BELOW: char = '\u{0323}';

pub const CIRCUMFLEX: char = '\u{0302}';
pub const BREVE: char = '\u{0306}';
pub const HORN: char = '\u{031B}';

/// The six lexical tones. `Ngang` is written without a mark.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Tone {
    Ngang,
    Huyen,
    Sac,
    Hoi,
    Nga,
    Nang,
}

impl Tone {
    pub const ALL: [Tone; 6] = [
        Tone::Ngang,
        Tone::Huyen,
        Tone::Sac,
        Tone::Hoi,
        Tone::Nga,
        Tone::Nang,
    ];

    /// Combining mark that writes this tone, `None` for ngang.
    pub fn mark(self) -> Option<char> {
        match self {
            Tone::Ngang => None,
            Tone::Huyen => Some(GRAVE),
            Tone::Sac => Some(ACUTE),
            Tone::Hoi => Some(HOOK_ABOVE),
            Tone::Nga => Some(TILDE),
            Tone::Nang => Some(DOT_BELOW),
        }
    }

    pub fn from_mark(c: char) -> Option<Tone> {
        match c {
            GRAVE => Some(Tone::Huyen),
            ACUTE => Some(Tone::Sac),
            HOOK_ABOVE => Some(Tone::Hoi),
            TILDE => Some(Tone::Nga),
            DOT_BELOW => Some(Tone::Nang),
            _ => None,
        }
    }

    /// Vietnamese name with diacritics.
    pub fn name(self) -> &'static str {
        match self {
            Tone::Ngang => "ngang",
            Tone::Huyen => "huyền",
            Tone::Sac => "sắc",
            Tone::Hoi => "hỏi",
            Tone::Nga => "ngã",
            Tone::Nang => "nặng",
        }
    }

    /// ASCII identifier used in data files.
    pub fn ident(self) -> &'static str {
        match self {
            Tone::Ngang => "ngang",
            Tone::Huyen => "huyen",
            Tone::Sac => "sac",
            Tone::Hoi => "hoi",
            Tone::Nga => "nga",
            Tone::Nang => "nang",
        }
    }

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn class(self) -> ToneClass {
        tone_class(self)
    }
}

impl fmt::Display for Tone {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Tone {
    type Err = OrthographyError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let folded = strip_diacritics(&normalize(s));
        Tone::ALL
            .into_iter()
            .find(|t| t.ident() == folded)
            .ok_or_else(|| OrthographyError::UnknownTone(s.to_string()))
    }
}

/// Register partition of the tones.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ToneClass {
    /// Level register: ngang, huyền.
    Bang,
    /// Oblique register: sắc, hỏi, ngã, nặng.
    Trac,
}

impl ToneClass {
    pub fn name(self) -> &'static str {
        match self {
            ToneClass::Bang => "bằng",
            ToneClass::Trac => "trắc",
        }
    }
}

impl fmt::Display for ToneClass {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

pub fn tone_class(tone: Tone) -> ToneClass {
    match tone {
        Tone::Ngang | Tone::Huyen => ToneClass::Bang,
        Tone::Sac | Tone::Hoi | Tone::Nga | Tone::Nang => ToneClass::Trac,
    }
}

pub fn is_tone_mark(c: char) -> bool {
    Tone::from_mark(c).is_some()
}

pub fn is_quality_mark(c: char) -> bool {
    matches!(c, CIRCUMFLEX | BREVE | HORN)
}

/// Combining Diacritical Marks block.
pub fn is_combining_mark(c: char) -> bool {
    ('\u{0300}'..='\u{036F}').contains(&c)
}

/// Lowercased, decomposed text with quality marks ahead of tone marks.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NormalizedText(String);

impl NormalizedText {
    pub fn as_str(&self) -> &str {
        &self.0
    }

    pub fn into_string(self) -> String {
        self.0
    }

    /// Precomposed (NFC) rendering, for display and dictionary lookups.
    pub fn composed(&self) -> String {
        self.0.nfc().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl fmt::Display for NormalizedText {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.composed())
    }
}

impl AsRef<str> for NormalizedText {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

pub fn normalize(text: &str) -> NormalizedText {
    let lower = text.to_lowercase();
    let mut out = String::with_capacity(lower.len() + 8);
    let mut marks: Vec<char> = Vec::new();
    for c in lower.nfd() {
        if is_combining_mark(c) {
            marks.push(c);
        } else {
            flush_marks(&mut out, &mut marks);
            out.push(c);
        }
    }
    flush_marks(&mut out, &mut marks);
    NormalizedText(out)
}

fn flush_marks(out: &mut String, marks: &mut Vec<char>) {
    // stable: relative order of tone and other marks is kept
    marks.sort_by_key(|&c| !is_quality_mark(c));
    out.extend(marks.drain(..));
}

/// Splits off the tone. Vowel-quality marks stay in the toneless form.
pub fn extract_tone(text: &NormalizedText) -> Result<(Tone, NormalizedText), OrthographyError> {
    let mut tone = Tone::Ngang;
    let mut count = 0;
    let mut toneless = String::with_capacity(text.0.len());
    for c in text.0.chars() {
        match Tone::from_mark(c) {
            Some(t) => {
                tone = t;
                count += 1;
            }
            None => toneless.push(c),
        }
    }
    if count > 1 {
        return Err(OrthographyError::MultipleToneMarks {
            text: text.composed(),
            count,
        });
    }
    Ok((tone, NormalizedText(toneless)))
}

/// Full strip: tone marks, quality marks and the stroke of đ. This is the base
/// form used to group diacritic collisions.
pub fn strip_diacritics(text: &NormalizedText) -> String {
    text.0
        .chars()
        .filter(|&c| !is_combining_mark(c))
        .map(|c| match c {
            'đ' => 'd',
            'Đ' => 'D',
            other => other,
        })
        .collect()
}

/// Tone-only strip, composed: "Trường" -> "trương".
pub fn tone_stripped(text: &str) -> Result<String, OrthographyError> {
    let (_, toneless) = extract_tone(&normalize(text))?;
    Ok(toneless.composed())
}

/// Lowercase NFC form used for token equality.
pub fn fold(text: &str) -> String {
    text.to_lowercase().nfc().collect()
}

/// Writes `tone` onto the `letter`-th base character (0-based, combining marks
/// not counted) of a toneless normalized string.
pub fn place_tone(
    toneless: &NormalizedText,
    letter: usize,
    tone: Tone,
) -> Result<NormalizedText, OrthographyError> {
    if toneless.0.chars().any(is_tone_mark) {
        return Err(OrthographyError::AlreadyToned(toneless.composed()));
    }
    let Some(mark) = tone.mark() else {
        return Ok(toneless.clone());
    };
    let chars: Vec<char> = toneless.0.chars().collect();
    let mut seen = 0usize;
    let mut insert_at = None;
    for (i, &c) in chars.iter().enumerate() {
        if is_combining_mark(c) {
            continue;
        }
        if seen == letter {
            let mut end = i + 1;
            while end < chars.len() && is_combining_mark(chars[end]) {
                end += 1;
            }
            insert_at = Some(end);
            break;
        }
        seen += 1;
    }
    let at = insert_at.ok_or(OrthographyError::LetterOutOfRange {
        index: letter,
        text: toneless.composed(),
    })?;
    let mut out: String = chars[..at].iter().collect();
    out.push(mark);
    out.extend(chars[at..].iter());
    Ok(normalize(&out))
}
