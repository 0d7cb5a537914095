use std::fmt;

use crate::dataset::{Cell, ImageRecord, Table};
use crate::error::DiagnosticsError;
use crate::orthography::{normalize, strip_diacritics};

use super::{word_tokens, Stopwords, MIN_TOKEN_CHARS};

/// How an OCR token is referenced by a caption, strongest first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MatchKind {
    Exact,
    /// Equal once diacritics are stripped.
    BaseForm,
    /// The OCR token occurs inside a caption token.
    OcrInCaption,
    /// A caption token occurs inside the OCR token.
    CaptionInOcr,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum UsageCategory {
    VerbatimHeavy,
    ParaphraseHeavy,
    PartialReference,
    ContextualInference,
}

impl UsageCategory {
    pub const ALL: [UsageCategory; 4] = [
        UsageCategory::VerbatimHeavy,
        UsageCategory::ParaphraseHeavy,
        UsageCategory::PartialReference,
        UsageCategory::ContextualInference,
    ];

    pub fn name(self) -> &'static str {
        match self {
            UsageCategory::VerbatimHeavy => "verbatim-heavy",
            UsageCategory::ParaphraseHeavy => "paraphrase-heavy",
            UsageCategory::PartialReference => "partial-reference",
            UsageCategory::ContextualInference => "contextual-inference",
        }
    }
}

impl fmt::Display for UsageCategory {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct UsageLabel {
    pub category: UsageCategory,
    pub coverage: f64,
    pub valid_tokens: usize,
    pub exact: usize,
    pub base_form: usize,
    pub ocr_in_caption: usize,
    pub caption_in_ocr: usize,
}

impl UsageLabel {
    pub fn matched(&self) -> usize {
        self.exact + self.approximate()
    }

    pub fn approximate(&self) -> usize {
        self.base_form + self.ocr_in_caption + self.caption_in_ocr
    }
}

/// Category from match counts. Coverage bands come first: below 15% is
/// contextual and 15% to 30% inclusive is partial. Above 30% the caption is
/// verbatim-heavy when more than half its matches are exact, otherwise
/// paraphrase-heavy.
fn categorize(valid: usize, exact: usize, matched: usize) -> UsageCategory {
    // integer comparisons keep the band edges exact
    if matched * 100 < 15 * valid {
        UsageCategory::ContextualInference
    } else if matched * 100 <= 30 * valid {
        UsageCategory::PartialReference
    } else if exact * 2 > matched {
        UsageCategory::VerbatimHeavy
    } else {
        UsageCategory::ParaphraseHeavy
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum CopyLabel {
    ExactCopy,
    BaseFormCopy,
    Generated,
}

impl CopyLabel {
    pub const ALL: [CopyLabel; 3] = [CopyLabel::ExactCopy, CopyLabel::BaseFormCopy, CopyLabel::Generated];

    pub fn name(self) -> &'static str {
        match self {
            CopyLabel::ExactCopy => "exact-copy",
            CopyLabel::BaseFormCopy => "base-form-copy",
            CopyLabel::Generated => "generated",
        }
    }
}

fn base(word: &str) -> String {
    strip_diacritics(&normalize(word))
}

/// Matching rules for coverage, usage and copy analyses.
#[derive(Debug, Clone, PartialEq)]
pub struct TextMatcher {
    pub stopwords: Stopwords,
    pub min_chars: usize,
}

impl Default for TextMatcher {
    fn default() -> Self {
        TextMatcher {
            stopwords: Stopwords::bundled(),
            min_chars: MIN_TOKEN_CHARS,
        }
    }
}

impl TextMatcher {
    pub fn new(stopwords: Stopwords) -> Self {
        TextMatcher {
            stopwords,
            ..TextMatcher::default()
        }
    }

    fn is_valid(&self, word: &str) -> bool {
        word.chars().count() >= self.min_chars && !self.stopwords.contains(word)
    }

    /// OCR words long enough and not stopwords, one entry per occurrence.
    pub fn valid_ocr_tokens(&self, record: &ImageRecord) -> Vec<String> {
        record
            .ocr_tokens
            .iter()
            .flat_map(|t| word_tokens(&t.text))
            .filter(|w| self.is_valid(w))
            .collect()
    }

    /// The strongest way any caption token references `ocr`.
    pub fn match_kind(&self, ocr: &str, caption_tokens: &[String]) -> Option<MatchKind> {
        if caption_tokens.iter().any(|c| c == ocr) {
            return Some(MatchKind::Exact);
        }
        let b = base(ocr);
        if caption_tokens.iter().any(|c| base(c) == b) {
            return Some(MatchKind::BaseForm);
        }
        if caption_tokens.iter().any(|c| c.contains(ocr)) {
            return Some(MatchKind::OcrInCaption);
        }
        if caption_tokens
            .iter()
            .any(|c| c.chars().count() >= self.min_chars && ocr.contains(c.as_str()))
        {
            return Some(MatchKind::CaptionInOcr);
        }
        None
    }

    fn caption_tokens(&self, record: &ImageRecord, index: usize) -> Result<Vec<String>, DiagnosticsError> {
        let caption = record.captions.get(index).ok_or_else(|| DiagnosticsError::CaptionIndex {
            image_id: record.image_id.clone(),
            index,
        })?;
        Ok(word_tokens(&caption.caption))
    }

    /// Usage label of the caption at position `index` (0-based) of `record`.
    pub fn usage_taxonomy(&self, record: &ImageRecord, index: usize) -> Result<UsageLabel, DiagnosticsError> {
        let caption = self.caption_tokens(record, index)?;
        let valid = self.valid_ocr_tokens(record);
        if valid.is_empty() {
            return Err(DiagnosticsError::NoValidOcrTokens {
                image_id: record.image_id.clone(),
            });
        }
        let mut label = UsageLabel {
            category: UsageCategory::ContextualInference,
            coverage: 0.0,
            valid_tokens: valid.len(),
            exact: 0,
            base_form: 0,
            ocr_in_caption: 0,
            caption_in_ocr: 0,
        };
        for tok in &valid {
            match self.match_kind(tok, &caption) {
                Some(MatchKind::Exact) => label.exact += 1,
                Some(MatchKind::BaseForm) => label.base_form += 1,
                Some(MatchKind::OcrInCaption) => label.ocr_in_caption += 1,
                Some(MatchKind::CaptionInOcr) => label.caption_in_ocr += 1,
                None => {}
            }
        }
        label.coverage = label.matched() as f64 / valid.len() as f64;
        label.category = categorize(valid.len(), label.exact, label.matched());
        Ok(label)
    }

    pub fn coverage_rate(&self, record: &ImageRecord, index: usize) -> Result<f64, DiagnosticsError> {
        Ok(self.usage_taxonomy(record, index)?.coverage)
    }

    /// Labels every caption token of every caption: `(caption id, token, label)`.
    pub fn copy_classification(&self, record: &ImageRecord) -> Vec<(u32, String, CopyLabel)> {
        let ocr: Vec<String> = record.ocr_tokens.iter().flat_map(|t| word_tokens(&t.text)).collect();
        let ocr_bases: Vec<String> = ocr.iter().map(|w| base(w)).collect();
        let mut out = Vec::new();
        for caption in &record.captions {
            for tok in word_tokens(&caption.caption) {
                let label = if ocr.contains(&tok) {
                    CopyLabel::ExactCopy
                } else if ocr_bases.contains(&base(&tok)) {
                    CopyLabel::BaseFormCopy
                } else {
                    CopyLabel::Generated
                };
                out.push((caption.id, tok, label));
            }
        }
        out
    }

    /// Category counts with mean coverage, over all captions of all records.
    /// Images without valid OCR tokens are counted separately.
    pub fn usage_table(&self, records: &[ImageRecord]) -> Table {
        let mut counts = [0usize; 4];
        let mut coverage = [0.0f64; 4];
        let mut unclassified = 0usize;
        for r in records {
            for i in 0..r.captions.len() {
                match self.usage_taxonomy(r, i) {
                    Ok(label) => {
                        let k = label.category as usize;
                        counts[k] += 1;
                        coverage[k] += label.coverage;
                    }
                    Err(_) => unclassified += 1,
                }
            }
        }
        let total: usize = counts.iter().sum();
        let mut t = Table::new("usage", &["category", "captions", "share", "mean_coverage"]);
        for c in UsageCategory::ALL {
            let k = c as usize;
            let share = if total == 0 { 0.0 } else { counts[k] as f64 / total as f64 };
            let mean = if counts[k] == 0 { 0.0 } else { coverage[k] / counts[k] as f64 };
            t.push(vec![Cell::text(c.name()), counts[k].into(), share.into(), mean.into()]);
        }
        t.push(vec![Cell::text("no-valid-ocr"), unclassified.into(), Cell::Real(f64::NAN), Cell::Real(f64::NAN)]);
        t
    }

    pub fn copy_table(&self, records: &[ImageRecord]) -> Table {
        let mut counts = [0usize; 3];
        for r in records {
            for (_, _, label) in self.copy_classification(r) {
                counts[label as usize] += 1;
            }
        }
        let total: usize = counts.iter().sum();
        let mut t = Table::new("copy_sources", &["source", "tokens", "share"]);
        for l in CopyLabel::ALL {
            let n = counts[l as usize];
            let share = if total == 0 { 0.0 } else { n as f64 / total as f64 };
            t.push(vec![Cell::text(l.name()), n.into(), share.into()]);
        }
        t
    }
}

pub fn usage_taxonomy(record: &ImageRecord, caption_index: usize) -> Result<UsageLabel, DiagnosticsError> {
    TextMatcher::default().usage_taxonomy(record, caption_index)
}

pub fn coverage_rate(record: &ImageRecord, caption_index: usize) -> Result<f64, DiagnosticsError> {
    TextMatcher::default().coverage_rate(record, caption_index)
}

pub fn copy_classification(record: &ImageRecord) -> Vec<(u32, String, CopyLabel)> {
    TextMatcher::default().copy_classification(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::OcrToken;
    use crate::fusion::BoundingBox;

    fn record(caption: &str, ocr: &[&str]) -> ImageRecord {
        let bbox = BoundingBox::new(0.5, 0.5, 0.1, 0.1).unwrap();
        ocr.iter()
            .fold(ImageRecord::new("img").with_caption(caption), |r, t| r.with_ocr(OcrToken::new(t, bbox, 0.9)))
    }

    #[test]
    fn quoting_everything_is_verbatim() {
        let r = record("biển hiệu phở hà nội ngon", &["PHỞ", "HÀ", "NỘI", "NGON"]);
        let l = usage_taxonomy(&r, 0).unwrap();
        assert_eq!(l.category, UsageCategory::VerbatimHeavy);
        assert_eq!(l.coverage, 1.0);
        assert_eq!(l.exact, 4);
    }

    #[test]
    fn one_in_ten_is_contextual() {
        let ocr = ["phở", "bún", "chả", "nem", "bánh", "xèo", "gỏi", "cuốn", "lẩu", "mắm"];
        let r = record("quán ăn có phở", &ocr);
        let l = usage_taxonomy(&r, 0).unwrap();
        assert_eq!(l.valid_tokens, 10);
        assert_eq!(l.category, UsageCategory::ContextualInference);
        assert!((l.coverage - 0.1).abs() < 1e-15);
    }

    #[test]
    fn band_edges() {
        assert_eq!(categorize(20, 3, 3), UsageCategory::PartialReference);
        assert_eq!(categorize(20, 0, 2), UsageCategory::ContextualInference);
        assert_eq!(categorize(10, 3, 3), UsageCategory::PartialReference);
        assert_eq!(categorize(10, 3, 4), UsageCategory::VerbatimHeavy);
        assert_eq!(categorize(10, 2, 4), UsageCategory::ParaphraseHeavy);
        assert_eq!(categorize(10, 1, 4), UsageCategory::ParaphraseHeavy);
    }

    #[test]
    fn coverage_counts_each_ocr_token_once() {
        let ocr = ["phở", "gà", "bún", "bò", "nem", "rán", "chả", "giò"];
        let r = record("phở phở gà và phở", &ocr);
        assert_eq!(coverage_rate(&r, 0).unwrap(), 0.25);
    }

    #[test]
    fn match_kinds_and_directions() {
        let m = TextMatcher::default();
        let cap = word_tokens("cafe sữa đá ở coffeehouse");
        assert_eq!(m.match_kind("sữa", &cap), Some(MatchKind::Exact));
        assert_eq!(m.match_kind("sua", &cap), Some(MatchKind::BaseForm));
        assert_eq!(m.match_kind("coffee", &cap), Some(MatchKind::OcrInCaption));
        assert_eq!(m.match_kind("cafeteria", &cap), Some(MatchKind::CaptionInOcr));
        assert_eq!(m.match_kind("trà", &cap), None);
    }

    #[test]
    fn stopwords_and_short_tokens_are_not_valid() {
        let r = record("một cửa hàng", &["và", "a", "CỬA", "HÀNG"]);
        assert_eq!(TextMatcher::default().valid_ocr_tokens(&r), ["cửa", "hàng"]);
        let custom = TextMatcher::new(Stopwords::parse("cửa"));
        assert_eq!(custom.valid_ocr_tokens(&r), ["và", "hàng"]);
    }

    #[test]
    fn errors() {
        let r = record("không có chữ", &["và"]);
        assert!(matches!(usage_taxonomy(&r, 0), Err(DiagnosticsError::NoValidOcrTokens { .. })));
        assert!(matches!(usage_taxonomy(&r, 1), Err(DiagnosticsError::CaptionIndex { index: 1, .. })));
    }

    #[test]
    fn copy_labels() {
        let r = record("bán màu", &["BÁN"]);
        let labels: Vec<CopyLabel> = copy_classification(&r).into_iter().map(|(_, _, l)| l).collect();
        assert_eq!(labels, [CopyLabel::ExactCopy, CopyLabel::Generated]);
        let r = record("bán", &["ban"]);
        assert_eq!(copy_classification(&r)[0].2, CopyLabel::BaseFormCopy);
        assert_eq!(copy_classification(&record("màu", &[]))[0].2, CopyLabel::Generated);
    }

    #[test]
    fn summary_tables() {
        let recs = [record("phở hà nội", &["phở", "hà", "nội"]), record("x", &["và"])];
        let m = TextMatcher::default();
        let t = m.usage_table(&recs);
        assert_eq!(t.rows[0][1], Cell::Int(1));
        assert_eq!(t.rows[4][1], Cell::Int(1));
        assert_eq!(m.copy_table(&recs).rows.len(), 3);
    }
}
