use std::collections::BTreeSet;
use std::fmt;

use crate::dataset::{Cell, Table};
use crate::error::DiagnosticsError;
use crate::orthography::{is_quality_mark, normalize, Tone};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ErrorType {
    /// A toned word read without its tone mark.
    ToneDrop,
    /// One tone mark read as another.
    ToneSubstitution,
    /// A vowel read as another member of its family (a/ă/â, o/ô/ơ, u/ư, e/ê).
    VowelVariant,
    /// đ read as d or the reverse.
    StrokeConfusion,
    /// An unmarked word read with a tone mark.
    ToneInsertion,
}

impl ErrorType {
    pub const ALL: [ErrorType; 5] = [
        ErrorType::ToneDrop,
        ErrorType::ToneSubstitution,
        ErrorType::VowelVariant,
        ErrorType::StrokeConfusion,
        ErrorType::ToneInsertion,
    ];

    pub fn code(self) -> &'static str {
        match self {
            ErrorType::ToneDrop => "T1",
            ErrorType::ToneSubstitution => "T2",
            ErrorType::VowelVariant => "T3",
            ErrorType::StrokeConfusion => "T4",
            ErrorType::ToneInsertion => "T5",
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ErrorType::ToneDrop => "tone drop",
            ErrorType::ToneSubstitution => "tone substitution",
            ErrorType::VowelVariant => "vowel variant",
            ErrorType::StrokeConfusion => "đ/d confusion",
            ErrorType::ToneInsertion => "tone insertion",
        }
    }

    fn is_tonal(self) -> bool {
        matches!(self, ErrorType::ToneDrop | ErrorType::ToneSubstitution | ErrorType::ToneInsertion)
    }
}

impl fmt::Display for ErrorType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ErrorLabel {
    pub types: BTreeSet<ErrorType>,
}

impl ErrorLabel {
    pub fn of(types: &[ErrorType]) -> Self {
        ErrorLabel {
            types: types.iter().copied().collect(),
        }
    }

    pub fn compound(&self) -> bool {
        self.types.len() >= 2
    }

    /// False when the two spellings agree.
    pub fn is_error(&self) -> bool {
        !self.types.is_empty()
    }

    pub fn has(&self, t: ErrorType) -> bool {
        self.types.contains(&t)
    }
}

impl fmt::Display for ErrorLabel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.types.is_empty() {
            return f.write_str("none");
        }
        let codes: Vec<&str> = self.types.iter().map(|t| t.code()).collect();
        write!(f, "{}", codes.join("+"))?;
        if self.compound() {
            f.write_str(" (compound)")?;
        }
        Ok(())
    }
}

/// One base letter with the marks stacked on it.
#[derive(Debug, Clone, PartialEq)]
struct Letter {
    base: char,
    quality: Option<char>,
    tone: Option<Tone>,
}

impl Letter {
    /// The letter with đ folded to d, used for alignment.
    fn plain(&self) -> char {
        if self.base == 'đ' {
            'd'
        } else {
            self.base
        }
    }

    /// Composed vowel variant without tone, e.g. "ơ".
    fn variant(&self) -> String {
        let mut s = String::from(self.base);
        s.extend(self.quality);
        crate::orthography::normalize(&s).composed()
    }
}

fn letters(token: &str) -> Vec<Letter> {
    let mut out: Vec<Letter> = Vec::new();
    for c in normalize(token).as_str().chars() {
        if let Some(t) = Tone::from_mark(c) {
            if let Some(l) = out.last_mut() {
                l.tone = Some(t);
            }
        } else if is_quality_mark(c) {
            if let Some(l) = out.last_mut() {
                l.quality = Some(c);
            }
        } else if !crate::orthography::is_combining_mark(c) {
            out.push(Letter {
                base: c,
                quality: None,
                tone: None,
            });
        }
    }
    out
}

/// The word's tone and the index of the letter carrying it.
fn word_tone(letters: &[Letter]) -> (Tone, Option<usize>) {
    letters
        .iter()
        .enumerate()
        .find_map(|(i, l)| l.tone.map(|t| (t, Some(i))))
        .unwrap_or((Tone::Ngang, None))
}

/// Labels how `ocr` misreads `reference`. The two must align letter by letter
/// once tone marks, vowel-quality marks and the stroke of đ are removed.
///
/// A tone change on a vowel that also carries a quality mark counts as a
/// vowel-variant error as well, since the stacked glyph as a whole was misread
/// (so "nguyễn" read as "nguyên" is compound).
pub fn classify_error(reference: &str, ocr: &str) -> Result<ErrorLabel, DiagnosticsError> {
    let r = letters(reference);
    let o = letters(ocr);
    if r.len() != o.len() || r.iter().zip(&o).any(|(a, b)| a.plain() != b.plain()) {
        return Err(DiagnosticsError::NotComparable {
            reference: reference.to_string(),
            ocr: ocr.to_string(),
        });
    }
    let mut label = ErrorLabel::default();
    for (a, b) in r.iter().zip(&o) {
        if a.base != b.base {
            label.types.insert(ErrorType::StrokeConfusion);
        }
        if a.quality != b.quality {
            label.types.insert(ErrorType::VowelVariant);
        }
    }
    let ((rt, rpos), (ot, opos)) = (word_tone(&r), word_tone(&o));
    let tone_error = match (rt == Tone::Ngang, ot == Tone::Ngang) {
        (false, true) => Some(ErrorType::ToneDrop),
        (true, false) => Some(ErrorType::ToneInsertion),
        (false, false) if rt != ot => Some(ErrorType::ToneSubstitution),
        _ => None,
    };
    if let Some(t) = tone_error {
        label.types.insert(t);
        let carrier = rpos.or(opos).expect("a tone error has a toned letter");
        if r[carrier].quality.is_some() || o[carrier].quality.is_some() {
            label.types.insert(ErrorType::VowelVariant);
        }
    }
    Ok(label)
}

/// Vowel variants in the order used by the vowel confusion matrix.
pub const VOWEL_VARIANTS: [&str; 10] = ["a", "ă", "â", "e", "ê", "o", "ô", "ơ", "u", "ư"];

/// Directed reference→OCR counts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrices {
    /// Indexed by [`Tone::index`], from tone-drop, substitution and insertion errors.
    pub tone: [[u64; 6]; 6],
    /// Indexed by position in [`VOWEL_VARIANTS`].
    pub vowel: [[u64; 10]; 10],
    /// Index 0 is d, 1 is đ; every d/đ letter of the stroke-confusion errors.
    pub stroke: [[u64; 2]; 2],
}

impl Default for ConfusionMatrices {
    fn default() -> Self {
        ConfusionMatrices {
            tone: [[0; 6]; 6],
            vowel: [[0; 10]; 10],
            stroke: [[0; 2]; 2],
        }
    }
}

impl ConfusionMatrices {
    pub fn tone_count(&self, reference: Tone, ocr: Tone) -> u64 {
        self.tone[reference.index()][ocr.index()]
    }

    pub fn vowel_count(&self, reference: &str, ocr: &str) -> Option<u64> {
        let i = VOWEL_VARIANTS.iter().position(|v| *v == reference)?;
        let j = VOWEL_VARIANTS.iter().position(|v| *v == ocr)?;
        Some(self.vowel[i][j])
    }

    pub fn tables(&self) -> Vec<Table> {
        fn square<const N: usize>(name: &str, labels: &[&str], m: &[[u64; N]; N]) -> Table {
            let mut columns = vec!["reference"];
            columns.extend_from_slice(labels);
            let mut t = Table::new(name, &columns);
            for (label, row) in labels.iter().zip(m) {
                let mut cells = vec![Cell::text(*label)];
                cells.extend(row.iter().map(|&c| Cell::Int(c as i64)));
                t.push(cells);
            }
            t
        }
        let tones: Vec<&str> = Tone::ALL.iter().map(|t| t.name()).collect();
        vec![
            square("tone_confusion", &tones, &self.tone),
            square("vowel_confusion", &VOWEL_VARIANTS, &self.vowel),
            square("stroke_confusion", &["d", "đ"], &self.stroke),
        ]
    }
}

/// Counts labelled (reference, OCR) pairs into tone, vowel-variant and đ/d
/// matrices. Pairs that do not align are skipped.
pub fn confusion_matrices<R: AsRef<str>, O: AsRef<str>>(errors: &[(R, O, ErrorLabel)]) -> ConfusionMatrices {
    let mut m = ConfusionMatrices::default();
    for (reference, ocr, label) in errors {
        let (r, o) = (letters(reference.as_ref()), letters(ocr.as_ref()));
        if r.len() != o.len() {
            continue;
        }
        if label.types.iter().any(|t| t.is_tonal()) {
            let (rt, ot) = (word_tone(&r).0, word_tone(&o).0);
            m.tone[rt.index()][ot.index()] += 1;
        }
        for (a, b) in r.iter().zip(&o) {
            if label.has(ErrorType::VowelVariant) && a.quality != b.quality {
                let pos = |l: &Letter| VOWEL_VARIANTS.iter().position(|v| *v == l.variant());
                if let (Some(i), Some(j)) = (pos(a), pos(b)) {
                    m.vowel[i][j] += 1;
                }
            }
            if label.has(ErrorType::StrokeConfusion) && a.plain() == 'd' && b.plain() == 'd' {
                m.stroke[usize::from(a.base == 'đ')][usize::from(b.base == 'đ')] += 1;
            }
        }
    }
    m
}
