use std::path::PathBuf;

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OrthographyError {
    #[error("{count} tone marks in {text:?}")]
    MultipleToneMarks { text: String, count: usize },
    #[error("unknown tone name {0:?}")]
    UnknownTone(String),
    #[error("{0:?} already carries a tone mark")]
    AlreadyToned(String),
    #[error("letter {index} out of range in {text:?}")]
    LetterOutOfRange { index: usize, text: String },
}

#[derive(Debug, Error)]
pub enum InventoryError {
    #[error("cannot read inventory {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed inventory: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("inventory has {found} {what}, expected {expected}")]
    CountMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("rule {rule:?}: {message}")]
    BadRule { rule: String, message: String },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SyllableError {
    #[error("{0:?} is not a Vietnamese syllable")]
    NotASyllable(String),
    #[error(transparent)]
    Orthography(#[from] OrthographyError),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DiagnosticsError {
    #[error("vocabulary contains no Vietnamese words")]
    EmptyVocabulary,
    #[error("{reference:?} and {ocr:?} are not related by any diacritic error")]
    NotComparable { reference: String, ocr: String },
    #[error("image {image_id:?} has no valid OCR tokens")]
    NoValidOcrTokens { image_id: String },
    #[error("image {image_id:?} has no caption at index {index}")]
    CaptionIndex { image_id: String, index: usize },
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("degenerate bounding box (w={w}, h={h})")]
    DegenerateBox { w: f64, h: f64 },
    #[error("dimension mismatch in {context}: expected {expected}, found {found}")]
    DimensionMismatch {
        context: &'static str,
        expected: usize,
        found: usize,
    },
    #[error("{stream} row {row} has zero norm")]
    ZeroVector { stream: &'static str, row: usize },
    #[error("shape mismatch: {left:?} vs {right:?}")]
    ShapeMismatch {
        left: (usize, usize),
        right: (usize, usize),
    },
    #[error("{what} is not a probability distribution (sum {sum})")]
    NotADistribution { what: &'static str, sum: f64 },
    #[error("non-finite value in {0}")]
    NonFinite(String),
    #[error("invalid graph config: {0}")]
    InvalidConfig(String),
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("empty corpus")]
    EmptyCorpus,
    #[error("candidate {index} has no references")]
    MissingReferences { index: usize },
    #[error("{0}")]
    InvalidArgument(String),
}

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("cannot access {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("duplicate image_id {0:?}")]
    DuplicateImageId(String),
    #[error("image {image_id:?}: {message}")]
    CaptionCountViolation { image_id: String, message: String },
}
