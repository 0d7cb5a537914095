use std::fmt;

use crate::dataset::{Cell, ImageRecord, Table};
use crate::orthography::{normalize, strip_diacritics};

use super::taxonomy::{classify_error, ErrorLabel, ErrorType};
use super::{has_letters, word_tokens};

/// OCR confidence bucket: below 0.5, 0.5 up to 0.8, and 0.8 or above.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stratum {
    Low,
    Medium,
    High,
}

impl Stratum {
    pub const ALL: [Stratum; 3] = [Stratum::Low, Stratum::Medium, Stratum::High];

    pub fn of(confidence: f64) -> Stratum {
        if confidence < 0.5 {
            Stratum::Low
        } else if confidence < 0.8 {
            Stratum::Medium
        } else {
            Stratum::High
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Stratum::Low => "low",
            Stratum::Medium => "medium",
            Stratum::High => "high",
        }
    }

    pub fn range(self) -> &'static str {
        match self {
            Stratum::Low => "<0.5",
            Stratum::Medium => "0.5-0.8",
            Stratum::High => ">=0.8",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// A caption token and an OCR token of the same image with equal base forms.
#[derive(Debug, Clone, PartialEq)]
pub struct DivergenceRecord {
    pub image_id: String,
    pub caption_id: u32,
    pub caption_token: String,
    pub ocr_token: String,
    pub ocr_confidence: f64,
    /// Whether the full normalized spellings are identical.
    pub agrees: bool,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct StratumCounts {
    pub matches: u64,
    pub divergences: u64,
}

impl StratumCounts {
    /// Divergences per match; zero for an empty stratum.
    pub fn rate(&self) -> f64 {
        if self.matches == 0 {
            0.0
        } else {
            self.divergences as f64 / self.matches as f64
        }
    }

    fn add(&mut self, agrees: bool) {
        self.matches += 1;
        self.divergences += u64::from(!agrees);
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct DivergenceTable {
    pub strata: [StratumCounts; 3],
    pub overall: StratumCounts,
    pub records: Vec<DivergenceRecord>,
}

impl DivergenceTable {
    pub fn stratum(&self, s: Stratum) -> StratumCounts {
        self.strata[s.index()]
    }

    /// Error labels of the divergent pairs, caption spelling as reference.
    pub fn labelled_errors(&self) -> Vec<(String, String, ErrorLabel)> {
        self.records
            .iter()
            .filter(|r| !r.agrees)
            .filter_map(|r| {
                let label = classify_error(&r.caption_token, &r.ocr_token).ok()?;
                label.is_error().then(|| (r.caption_token.clone(), r.ocr_token.clone(), label))
            })
            .collect()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new("divergence", &["stratum", "confidence", "matches", "divergences", "rate"]);
        let rows = Stratum::ALL
            .iter()
            .map(|s| (s.name(), s.range(), self.stratum(*s)))
            .chain([("overall", "all", self.overall)]);
        for (name, range, c) in rows {
            t.push(vec![
                Cell::text(name),
                Cell::text(range),
                Cell::Int(c.matches as i64),
                Cell::Int(c.divergences as i64),
                c.rate().into(),
            ]);
        }
        t
    }

    /// Error-type counts per stratum. A compound error counts once under
    /// each of its types.
    pub fn error_table(&self) -> Table {
        let mut columns = vec!["stratum", "errors", "compound"];
        columns.extend(ErrorType::ALL.iter().map(|t| t.code()));
        let mut t = Table::new("error_types", &columns);
        let mut counts = [[0u64; 7]; 4];
        for r in self.records.iter().filter(|r| !r.agrees) {
            let Ok(label) = classify_error(&r.caption_token, &r.ocr_token) else {
                continue;
            };
            if !label.is_error() {
                continue;
            }
            for row in [Stratum::of(r.ocr_confidence).index(), 3] {
                counts[row][0] += 1;
                counts[row][1] += u64::from(label.compound());
                for (k, ty) in ErrorType::ALL.iter().enumerate() {
                    counts[row][2 + k] += u64::from(label.has(*ty));
                }
            }
        }
        let names = Stratum::ALL.map(|s| s.name());
        for (name, row) in names.iter().chain(&["overall"]).zip(counts) {
            let mut cells = vec![Cell::text(*name)];
            cells.extend(row.iter().map(|&c| Cell::Int(c as i64)));
            t.push(cells);
        }
        t
    }
}

/// Pairs every caption token with every OCR token of the same image that has
/// the same stripped base form, and counts how many pairs differ in their
/// diacritics, per OCR confidence stratum. Tokens without letters are skipped.
pub fn divergence_analysis(records: &[ImageRecord]) -> DivergenceTable {
    let mut table = DivergenceTable::default();
    for record in records {
        let ocr: Vec<(String, String, String, f64)> = record
            .ocr_tokens
            .iter()
            .flat_map(|t| word_tokens(&t.text).into_iter().map(move |w| (w, t.confidence)))
            .filter(|(w, _)| has_letters(w))
            .map(|(w, c)| {
                let n = normalize(&w);
                (strip_diacritics(&n), n.into_string(), w, c)
            })
            .collect();
        for caption in &record.captions {
            for token in word_tokens(&caption.caption).into_iter().filter(|w| has_letters(w)) {
                let n = normalize(&token);
                let base = strip_diacritics(&n);
                for (ocr_base, ocr_norm, ocr_word, conf) in &ocr {
                    if *ocr_base != base {
                        continue;
                    }
                    let agrees = *ocr_norm == n.as_str();
                    table.strata[Stratum::of(*conf).index()].add(agrees);
                    table.overall.add(agrees);
                    table.records.push(DivergenceRecord {
                        image_id: record.image_id.clone(),
                        caption_id: caption.id,
                        caption_token: token.clone(),
                        ocr_token: ocr_word.clone(),
                        ocr_confidence: *conf,
                        agrees,
                    });
                }
            }
        }
    }
    table
}
